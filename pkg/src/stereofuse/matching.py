"""Classical binocular matching core: census features, cost volume with a
disparity-axis pyramid, windowed cost lookup, and a deterministic
softmin-expectation disparity update.

Costs are normalized Hamming distances in [0, 1]; the sentinel cost for
out-of-range taps is the maximum, 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .grid import ImageBuffer, ScalarField

SENTINEL_COST = 1.0


@dataclass
class CensusField:
    """Per-pixel census bitmask; bit i compares the i-th raster-order neighbor."""

    codes: np.ndarray  # uint64, H x W
    window: int

    def __post_init__(self):
        self.codes = np.ascontiguousarray(self.codes, dtype=np.uint64)
        if self.codes.ndim != 2:
            raise DimensionError("census codes must be 2-D")

    @property
    def bits(self):
        return self.window * self.window - 1

    @property
    def shape(self):
        return self.codes.shape


def census_transform(image: ImageBuffer, window: int = 5) -> CensusField:
    """Census bitmask per pixel: bit set iff the neighbor is brighter than the
    center.  Neighbors are ordered row-major within the window, center
    excluded; borders clamp to the edge.  RGB input is luma-converted.
    """
    if window % 2 == 0 or window < 3:
        raise ParameterError(f"census window must be odd and >= 3, got {window}")
    bits = window * window - 1
    if bits > 64:
        raise ParameterError(
            f"census window {window} needs {bits} bits; at most 64 supported (window <= 7)"
        )
    gray = image.to_gray().data[:, :, 0]
    r = window // 2
    padded = np.pad(gray, r, mode="edge")
    h, w = gray.shape
    codes = np.zeros((h, w), dtype=np.uint64)
    bit = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            neighbor = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            codes |= (neighbor > gray).astype(np.uint64) << np.uint64(bit)
            bit += 1
    return CensusField(codes, window)


@dataclass
class CostVolume:
    """Per-pixel matching costs over disparity candidates, with a d-axis pyramid.

    ``pyramid[0]`` is the full-resolution cost array (H, W, d_max); level k
    holds ceil(d_max / 2^k) candidates, each the average of the two bins
    below it.
    """

    pyramid: list

    def __post_init__(self):
        if not self.pyramid:
            raise ParameterError("cost volume needs at least one pyramid level")
        for level in self.pyramid:
            if level.ndim != 3:
                raise DimensionError("cost arrays must be (H, W, d)")

    @property
    def cost(self):
        return self.pyramid[0]

    @property
    def d_max(self):
        return self.pyramid[0].shape[2]

    @property
    def height(self):
        return self.pyramid[0].shape[0]

    @property
    def width(self):
        return self.pyramid[0].shape[1]


def _halve_d_axis(cost):
    n = cost.shape[2]
    half = (n + 1) // 2
    out = np.empty(cost.shape[:2] + (half,), dtype=cost.dtype)
    even = cost[:, :, 0::2]
    odd = cost[:, :, 1::2]
    pairs = min(even.shape[2], odd.shape[2])
    out[:, :, :pairs] = 0.5 * (even[:, :, :pairs] + odd[:, :, :pairs])
    if n % 2 == 1:
        out[:, :, -1] = even[:, :, -1]
    return out


def build_cost_volume(left: CensusField, right: CensusField, d_max: int, levels: int = 2) -> CostVolume:
    """Normalized census Hamming costs cost(u, v, d) = popcount(L(u,v) ^ R(u-d,v)) / bits.

    Taps with u - d < 0 carry the sentinel cost.  ``levels`` counts pyramid
    levels including the base.
    """
    if left.shape != right.shape:
        raise DimensionError(f"census shapes differ: {left.shape} vs {right.shape}")
    if left.window != right.window:
        raise DimensionError("census windows differ between the two views")
    if d_max < 1:
        raise ParameterError(f"d_max must be >= 1, got {d_max}")
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    h, w = left.shape
    bits = left.bits
    cost = np.full((h, w, d_max), SENTINEL_COST, dtype=np.float32)
    for d in range(d_max):
        if d >= w:
            break
        diff = left.codes[:, d:] ^ right.codes[:, : w - d]
        cost[:, d:, d] = np.bitwise_count(diff).astype(np.float32) / bits
    pyramid = [cost]
    for _ in range(1, levels):
        pyramid.append(_halve_d_axis(pyramid[-1]))
    return CostVolume(pyramid)


@dataclass
class CostSlice:
    """Costs sampled at offsets {-radius..+radius} around the current disparity,
    one array (H, W, 2*radius+1) per pyramid level."""

    levels: list
    radius: int

    def __post_init__(self):
        span = 2 * self.radius + 1
        for level in self.levels:
            if level.ndim != 3 or level.shape[2] != span:
                raise DimensionError(
                    f"slice level shape {level.shape} inconsistent with radius {self.radius}"
                )

    @property
    def shape(self):
        return self.levels[0].shape[:2]


def lookup(volume: CostVolume, disparity: ScalarField, radius: int = 4) -> CostSlice:
    """Sample each pyramid level at fractional positions disparity/2^k + offset
    with linear interpolation along the d axis; out-of-range taps get the
    sentinel cost."""
    if disparity.shape != (volume.height, volume.width):
        raise DimensionError(
            f"disparity shape {disparity.shape} != volume shape "
            f"{(volume.height, volume.width)}"
        )
    if radius < 0:
        raise ParameterError(f"radius must be >= 0, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    disp = disparity.data.astype(np.float64)
    out_levels = []
    for k, level in enumerate(volume.pyramid):
        n = level.shape[2]
        pos = disp[:, :, None] / (2.0 ** k) + offsets[None, None, :]
        in_range = (pos >= 0.0) & (pos <= n - 1)
        safe = np.where(in_range, pos, 0.0)
        p0 = np.floor(safe).astype(np.int64)
        p1 = np.minimum(p0 + 1, n - 1)
        f = safe - p0
        c0 = np.take_along_axis(level, p0, axis=2).astype(np.float64)
        c1 = np.take_along_axis(level, p1, axis=2).astype(np.float64)
        val = c0 * (1.0 - f) + c1 * f
        out_levels.append(np.where(in_range, val, SENTINEL_COST).astype(np.float32))
    return CostSlice(out_levels, radius)


def wta_init(volume: CostVolume) -> ScalarField:
    """Winner-take-all disparity with one parabola-fit sub-pixel refinement.

    Argmins at either end of the range skip the fit; results are clamped to
    [0, d_max - 1].
    """
    cost = volume.cost
    n = cost.shape[2]
    if n < 3:
        raise ParameterError(f"sub-pixel WTA needs d_max >= 3, got {n}")
    am = np.argmin(cost, axis=2)
    base = am.astype(np.float64)
    interior = (am > 0) & (am < n - 1)
    am_c = np.clip(am, 1, n - 2)
    idx = am_c[:, :, None]
    c0 = np.take_along_axis(cost, idx - 1, axis=2)[:, :, 0].astype(np.float64)
    c1 = np.take_along_axis(cost, idx, axis=2)[:, :, 0].astype(np.float64)
    c2 = np.take_along_axis(cost, idx + 1, axis=2)[:, :, 0].astype(np.float64)
    denom = c0 - 2.0 * c1 + c2
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(np.abs(denom) > 1e-12, (c0 - c2) / (2.0 * denom), 0.0)
    disp = np.where(interior, base + delta, base)
    disp = np.clip(disp, 0.0, n - 1)
    return ScalarField(disp.astype(np.float32), np.ones_like(am, dtype=bool))


def matching_update(cost_slice: CostSlice, radius: int, temperature: float = 0.01) -> ScalarField:
    """Softmin-expectation disparity step over the lookup window.

    The per-offset costs are first averaged across pyramid levels with
    weights 1/2^level (renormalized); the update is then
    sum_o o * softmin(cost(o) / temperature).  Its magnitude never exceeds
    ``radius`` since it is a convex combination of the offsets.
    """
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    if radius != cost_slice.radius:
        raise ParameterError(
            f"radius {radius} does not match slice radius {cost_slice.radius}"
        )
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    level_weights = np.array([0.5 ** k for k in range(len(cost_slice.levels))])
    level_weights /= level_weights.sum()
    cost = np.zeros(cost_slice.levels[0].shape, dtype=np.float64)
    for weight, level in zip(level_weights, cost_slice.levels):
        cost += weight * level.astype(np.float64)
    shifted = (cost - cost.min(axis=2, keepdims=True)) / temperature
    ex = np.exp(-shifted)
    delta = (ex * offsets[None, None, :]).sum(axis=2) / ex.sum(axis=2)
    h, w = cost_slice.shape
    return ScalarField(delta.astype(np.float32), np.ones((h, w), dtype=bool))
