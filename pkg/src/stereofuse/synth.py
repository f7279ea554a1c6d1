"""Synthetic stereo scenes with exact ground truth.

Scenes are layered fronto-parallel rectangles over a textured background.
The right view is rendered by analytic reprojection of the layer geometry
(never by warping the left image), so occlusions are genuine and the
occlusion mask follows in closed form from the layer shadows.  Monocular
depth is an affine image of the GT disparity per region, optionally
corrupted by Gaussian noise and uniform outliers.

All randomness is drawn from counter-based Philox streams keyed off the
scene seed, one stream per stochastic element, so outputs are bit-identical
for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import SceneSpecError
from .grid import ImageBuffer, ScalarField
from .metrics import RegionMask


@dataclass
class MonoModel:
    """Affine mono-depth model: mono = a * gt_disp + b per region, plus noise."""

    affines: tuple = ((0.05, 0.3),)
    split: str = "none"              # none | vertical_halves
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_range: tuple = (0.0, 200.0)


@dataclass
class SceneSpec:
    seed: int = 0
    width: int = 320
    height: int = 256
    layer_count: int = 2
    disparity_range: tuple = (4.0, 24.0)
    layer_disparities: tuple | None = None   # explicit per layer, background first
    texture_density: float = 0.5
    textureless_fraction: float = 0.0
    d_max: int = 256
    mono: MonoModel = field(default_factory=MonoModel)

    def validate(self):
        if self.width < 8 or self.height < 8:
            raise SceneSpecError(f"width/height must be >= 8, got {self.width}x{self.height}")
        if self.layer_count < 1:
            raise SceneSpecError(f"layer_count must be >= 1, got {self.layer_count}")
        lo, hi = self.disparity_range
        if lo < 0 or hi < lo:
            raise SceneSpecError(f"disparity_range {self.disparity_range} must satisfy 0 <= lo <= hi")
        if hi > self.d_max - 1:
            raise SceneSpecError(
                f"disparity_range upper bound {hi} exceeds d_max-1 = {self.d_max - 1}"
            )
        if self.layer_disparities is not None:
            if len(self.layer_disparities) != self.layer_count:
                raise SceneSpecError(
                    f"layer_disparities has {len(self.layer_disparities)} entries, "
                    f"layer_count is {self.layer_count}"
                )
            for d in self.layer_disparities:
                if not 0 <= d <= self.d_max - 1:
                    raise SceneSpecError(
                        f"layer_disparities value {d} outside [0, {self.d_max - 1}]"
                    )
        if not 0.0 <= self.texture_density <= 1.0:
            raise SceneSpecError(f"texture_density {self.texture_density} outside [0, 1]")
        if not 0.0 <= self.textureless_fraction <= 1.0:
            raise SceneSpecError(
                f"textureless_fraction {self.textureless_fraction} outside [0, 1]"
            )
        if self.mono.split not in ("none", "vertical_halves"):
            raise SceneSpecError(f"mono.split '{self.mono.split}' unknown")
        if self.mono.split == "vertical_halves" and len(self.mono.affines) != 2:
            raise SceneSpecError("mono.split=vertical_halves needs exactly 2 affines")
        if not 0.0 <= self.mono.outlier_fraction <= 1.0:
            raise SceneSpecError(
                f"mono.outlier_fraction {self.mono.outlier_fraction} outside [0, 1]"
            )
        if self.mono.noise_sigma < 0:
            raise SceneSpecError(f"mono.noise_sigma {self.mono.noise_sigma} must be >= 0")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        mono_doc = doc.pop("mono", {})
        known = {f for f in cls.__dataclass_fields__}
        for key in doc:
            if key not in known:
                raise SceneSpecError(f"unknown scene spec field '{key}'")
        mono_known = {f for f in MonoModel.__dataclass_fields__}
        for key in mono_doc:
            if key not in mono_known:
                raise SceneSpecError(f"unknown mono model field 'mono.{key}'")
        if "affines" in mono_doc:
            mono_doc["affines"] = tuple(tuple(p) for p in mono_doc["affines"])
        if "outlier_range" in mono_doc:
            mono_doc["outlier_range"] = tuple(mono_doc["outlier_range"])
        mono = MonoModel(**mono_doc)
        for key in ("disparity_range", "layer_disparities"):
            if doc.get(key) is not None:
                doc[key] = tuple(doc[key])
        return cls(mono=mono, **doc)


@dataclass
class Scene:
    left: ImageBuffer
    right: ImageBuffer
    gt_disp_left: ScalarField
    gt_disp_right: ScalarField
    occlusion: RegionMask
    mono_depth: ScalarField
    region_masks: dict
    spec: SceneSpec
    layers: list   # (y0, y1, x0, x1, disparity), background first


def _octave_noise(rng, h, w, cell):
    """Bilinearly interpolated value noise with the given cell size."""
    gh = h // cell + 2
    gw = w // cell + 2
    g = rng.random((gh, gw)) - 0.5
    ys = np.arange(h, dtype=np.float64) / cell
    xs = np.arange(w, dtype=np.float64) / cell
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    return (g[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
            + g[np.ix_(y0, x0 + 1)] * (1 - fy) * fx
            + g[np.ix_(y0 + 1, x0)] * fy * (1 - fx)
            + g[np.ix_(y0 + 1, x0 + 1)] * fy * fx)


def _layer_texture(rng, h, w, density):
    """Multi-octave value noise; mid octaves (8-16 px) carry the matchable
    structure that survives the pipeline's 4x reduction."""
    albedo = 0.3 + 0.4 * rng.random()
    noise = (0.4 * _octave_noise(rng, h, w, 32)
             + 0.9 * _octave_noise(rng, h, w, 16)
             + 1.1 * _octave_noise(rng, h, w, 8)
             + 0.6 * _octave_noise(rng, h, w, 4)
             + 0.1 * (rng.random((h, w)) - 0.5))
    return np.clip(albedo + 1.6 * density * noise, 0.02, 0.98)


def _sample_columns(tex, shift):
    """tex sampled at column + shift with clamped linear interpolation."""
    h, w = tex.shape
    xs = np.arange(w, dtype=np.float64) + shift
    xs = np.clip(xs, 0.0, w - 1)
    x0 = np.floor(xs).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    f = xs - x0
    return tex[:, x0] * (1.0 - f)[None, :] + tex[:, x1] * f[None, :]


def generate_scene(spec: SceneSpec) -> Scene:
    """Render a scene bundle: images, GT disparities both views, analytic
    occlusion mask, mono depth, and region masks (all/occ/nonocc/textureless)."""
    spec.validate()
    h, w = spec.height, spec.width
    root = np.random.SeedSequence(spec.seed)
    geom_ss, tex_ss, patch_ss, noise_ss, outlier_ss = root.spawn(5)
    geom_rng = np.random.Generator(np.random.Philox(geom_ss))
    tex_rng = np.random.Generator(np.random.Philox(tex_ss))
    patch_rng = np.random.Generator(np.random.Philox(patch_ss))
    noise_rng = np.random.Generator(np.random.Philox(noise_ss))
    outlier_rng = np.random.Generator(np.random.Philox(outlier_ss))

    lo, hi = spec.disparity_range
    layers = []
    if spec.layer_disparities is not None:
        disparities = [float(d) for d in spec.layer_disparities]
    else:
        # drawn disparities are integral so layer shadows land on pixel edges
        # and the analytic occlusion mask is exact
        disparities = [float(round(lo))]
        for _ in range(spec.layer_count - 1):
            d = float(round(geom_rng.uniform(min(lo + 1.0, hi), hi)))
            disparities.append(min(max(d, round(lo) + 1.0), float(round(hi))))
    layers.append((0, h, 0, w, disparities[0]))
    for i in range(1, spec.layer_count):
        lw = int(geom_rng.uniform(0.20, 0.45) * w)
        lh = int(geom_rng.uniform(0.20, 0.45) * h)
        x0 = int(geom_rng.uniform(0, max(1, w - lw)))
        y0 = int(geom_rng.uniform(0, max(1, h - lh)))
        layers.append((y0, min(y0 + lh, h), x0, min(x0 + lw, w), disparities[i]))

    textures = np.stack(
        [_layer_texture(tex_rng, h, w, spec.texture_density) for _ in layers]
    )

    textureless = np.zeros((h, w), dtype=bool)
    if spec.textureless_fraction > 0:
        albedos = textures.mean(axis=(1, 2))
        for _ in range(200):
            if textureless.mean() >= spec.textureless_fraction:
                break
            pw = int(patch_rng.uniform(w / 16, w / 5)) + 1
            ph = int(patch_rng.uniform(h / 16, h / 5)) + 1
            px = int(patch_rng.uniform(0, max(1, w - pw)))
            py = int(patch_rng.uniform(0, max(1, h - ph)))
            for i in range(len(layers)):
                textures[i, py : py + ph, px : px + pw] = albedos[i]
            textureless[py : py + ph, px : px + pw] = True

    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]

    # left view: front-most (largest-disparity) covering layer wins
    disp_l = np.full((h, w), -np.inf)
    layer_id_l = np.zeros((h, w), dtype=np.int64)
    for i, (y0, y1, x0, x1, d) in enumerate(layers):
        covers = (rows >= y0) & (rows < y1) & (cols >= x0) & (cols < x1)
        front = covers & (d > disp_l)
        disp_l[front] = d
        layer_id_l[front] = i
    left = textures[layer_id_l, rows, cols]

    # right view: layer i occupies columns [x0 - d, x1 - d), same rows
    disp_r = np.full((h, w), -np.inf)
    layer_id_r = np.full((h, w), -1, dtype=np.int64)
    for i, (y0, y1, x0, x1, d) in enumerate(layers):
        covers = (rows >= y0) & (rows < y1) & (cols >= x0 - d) & (cols < x1 - d)
        front = covers & (d > disp_r)
        disp_r[front] = d
        layer_id_r[front] = i
    shifted = np.stack(
        [_sample_columns(textures[i], layers[i][4]) for i in range(len(layers))]
    )
    covered = layer_id_r >= 0
    right = np.where(covered, shifted[np.maximum(layer_id_r, 0), rows, cols], 0.5)
    disp_r_data = np.where(covered, disp_r, 0.0)

    # analytic occlusion: the left pixel's projection is off-frame or behind
    # a closer layer's right-frame footprint
    u_r = cols - disp_l
    occluded = u_r < 0
    for (y0, y1, x0, x1, d) in layers:
        covers = (rows >= y0) & (rows < y1) & (u_r >= x0 - d) & (u_r < x1 - d)
        occluded |= covers & (d > disp_l + 1e-9)

    gt_left = ScalarField(disp_l.astype(np.float32), np.ones((h, w), dtype=bool))
    gt_right = ScalarField(disp_r_data.astype(np.float32), covered)

    # mono depth: per-region affine of GT disparity, then noise and outliers
    mono = np.empty((h, w), dtype=np.float64)
    if spec.mono.split == "vertical_halves":
        (a1, b1), (a2, b2) = spec.mono.affines
        half = w // 2
        mono[:, :half] = a1 * disp_l[:, :half] + b1
        mono[:, half:] = a2 * disp_l[:, half:] + b2
    else:
        a1, b1 = spec.mono.affines[0]
        mono[:] = a1 * disp_l + b1
    if spec.mono.noise_sigma > 0:
        mono += noise_rng.normal(0.0, spec.mono.noise_sigma, size=(h, w))
    if spec.mono.outlier_fraction > 0:
        k = int(round(spec.mono.outlier_fraction * h * w))
        if k > 0:
            idx = outlier_rng.choice(h * w, size=k, replace=False)
            o_lo, o_hi = spec.mono.outlier_range
            mono.ravel()[idx] = outlier_rng.uniform(o_lo, o_hi, size=k)
    mono_field = ScalarField(mono.astype(np.float32), np.ones((h, w), dtype=bool))

    occ_mask = RegionMask("occ", occluded)
    region_masks = {
        "all": RegionMask("all", np.ones((h, w), dtype=bool)),
        "occ": RegionMask("occ", occluded.copy()),
        "nonocc": RegionMask("nonocc", ~occluded),
        "textureless": RegionMask("textureless", textureless),
    }
    return Scene(
        left=ImageBuffer(left.astype(np.float32)),
        right=ImageBuffer(np.clip(right, 0.0, 1.0).astype(np.float32)),
        gt_disp_left=gt_left,
        gt_disp_right=gt_right,
        occlusion=occ_mask,
        mono_depth=mono_field,
        region_masks=region_masks,
        spec=spec,
        layers=[tuple(layer) for layer in layers],
    )
