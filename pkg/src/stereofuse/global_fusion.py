"""Global fusion: robust affine registration of monocular depth onto
disparity, a closed-form confidence map, and the final convex blend.

Registration solves disp = a * mono + b as a Huber-loss IRLS regression,
re-estimating the residual scale from the median absolute residual each
round.  LOCAL mode fits per tile, shrunk toward the global parameters and
bilinearly interpolated to smooth per-pixel fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionError,
    InsufficientDataError,
    ParameterError,
)
from .grid import ScalarField
from .matching import CostSlice

MAD_TO_SIGMA = 1.4826          # normal-consistency factor for the median absolute residual
HUBER_MULTIPLIER = 1.345       # huber_delta = 1.345 * MAD-scale unless overridden
SHARPNESS_EPS = 1e-6


@dataclass
class RegistrationConfig:
    irls_iters: int = 20
    huber_delta: float | None = None   # None: re-derive from MAD each round
    min_inliers: int = 100
    tol: float = 1e-8

    def validated(self):
        if self.irls_iters < 1:
            raise ParameterError(f"irls_iters must be >= 1, got {self.irls_iters}")
        if self.huber_delta is not None and self.huber_delta <= 0:
            raise ParameterError(f"huber_delta must be positive, got {self.huber_delta}")
        if self.min_inliers < 2:
            raise ParameterError(f"min_inliers must be >= 2, got {self.min_inliers}")
        return self


@dataclass
class LocalRegistrationConfig:
    tile: int = 32
    lambda_reg: float = 0.1
    min_inliers: int = 30

    def validated(self):
        if self.tile < 16:
            raise ParameterError(f"tile must be >= 16 px, got {self.tile}")
        if self.lambda_reg < 0:
            raise ParameterError(f"lambda_reg must be >= 0, got {self.lambda_reg}")
        return self


@dataclass
class RegistrationField:
    """Per-pixel scale/shift fields plus the global fit they shrink toward."""

    a: np.ndarray
    b: np.ndarray
    global_a: float
    global_b: float
    mode: str  # "global" | "local"


def _wls_line(x, y, w):
    """Weighted least-squares (a, b) for y ~ a*x + b, float64 fixed order."""
    sw = np.sum(w)
    swx = np.sum(w * x)
    swy = np.sum(w * y)
    swxx = np.sum(w * x * x)
    swxy = np.sum(w * x * y)
    den = sw * swxx - swx * swx
    if den <= 0 or not np.isfinite(den):
        raise DegenerateInputError("zero-variance regressor in weighted fit")
    a = (sw * swxy - swx * swy) / den
    b = (swy - a * swx) / sw
    return a, b


def huber_irls(x, y, config: RegistrationConfig | None = None):
    """Huber-loss line fit by IRLS from an OLS start.

    Returns (a, b, weights, iterations).  The residual scale is re-estimated
    every round as MAD_TO_SIGMA * median(|residual|); points beyond
    huber_delta get weight delta/|r|.
    """
    config = (config or RegistrationConfig()).validated()
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionError("x and y sizes differ")
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    if np.ptp(x) == 0.0:
        raise DegenerateInputError("regressor has zero variance (constant mono input)")
    w = np.ones_like(x)
    a, b = _wls_line(x, y, w)
    iters = 0
    for _ in range(config.irls_iters):
        iters += 1
        r = y - a * x - b
        if config.huber_delta is not None:
            delta = config.huber_delta
        else:
            sigma = MAD_TO_SIGMA * np.median(np.abs(r))
            if sigma < 1e-12:
                break
            delta = HUBER_MULTIPLIER * sigma
        absr = np.abs(r)
        w = np.where(absr > delta, delta / np.maximum(absr, 1e-300), 1.0)
        a_new, b_new = _wls_line(x, y, w)
        if (abs(a_new - a) <= config.tol * max(1.0, abs(a))
                and abs(b_new - b) <= config.tol * max(1.0, abs(b))):
            a, b = a_new, b_new
            break
        a, b = a_new, b_new
    return a, b, w, iters


def _joint_samples(mono: ScalarField, disp: ScalarField):
    if mono.shape != disp.shape:
        raise DimensionError(f"mono shape {mono.shape} != disp shape {disp.shape}")
    ok = mono.valid & disp.valid
    return mono.data[ok].astype(np.float64), disp.data[ok].astype(np.float64), ok


def register_global(mono: ScalarField, disp: ScalarField,
                    config: RegistrationConfig | None = None) -> RegistrationField:
    """Single (a, b) aligning mono to disparity over all jointly valid pixels."""
    config = (config or RegistrationConfig()).validated()
    x, y, _ = _joint_samples(mono, disp)
    if x.size < config.min_inliers:
        raise InsufficientDataError(
            f"{x.size} jointly valid pixels < min_inliers {config.min_inliers}"
        )
    a, b, _, _ = huber_irls(x, y, config)
    h, w = mono.shape
    return RegistrationField(
        a=np.full((h, w), a, dtype=np.float64),
        b=np.full((h, w), b, dtype=np.float64),
        global_a=float(a),
        global_b=float(b),
        mode="global",
    )


def _regularized_wls(x, y, w, lam, a0, b0):
    """WLS shrunk toward (a0, b0): the data term is mean-normalized so lam is
    comparable across tile sizes; lam -> inf recovers (a0, b0)."""
    sw = np.sum(w)
    if sw <= 0:
        return a0, b0
    m_xx = np.sum(w * x * x) / sw
    m_x = np.sum(w * x) / sw
    m_xy = np.sum(w * x * y) / sw
    m_y = np.sum(w * y) / sw
    a11 = m_xx + lam
    a12 = m_x
    a22 = 1.0 + lam
    r1 = m_xy + lam * a0
    r2 = m_y + lam * b0
    den = a11 * a22 - a12 * a12
    if den <= 0 or not np.isfinite(den):
        return a0, b0
    a = (r1 * a22 - r2 * a12) / den
    b = (a11 * r2 - a12 * r1) / den
    return a, b


def register_local(mono: ScalarField, disp: ScalarField,
                   config: RegistrationConfig | None = None,
                   local: LocalRegistrationConfig | None = None) -> RegistrationField:
    """Per-pixel (a, b) fields from tile-wise Huber fits shrunk toward the
    global fit and bilinearly interpolated between tile centers.  Tiles with
    too few jointly valid pixels inherit the global parameters."""
    config = (config or RegistrationConfig()).validated()
    local = (local or LocalRegistrationConfig()).validated()
    base = register_global(mono, disp, config)
    a0, b0 = base.global_a, base.global_b
    h, w = mono.shape
    tile = local.tile
    n_ty = max(1, (h + tile - 1) // tile)
    n_tx = max(1, (w + tile - 1) // tile)
    tile_a = np.full((n_ty, n_tx), a0, dtype=np.float64)
    tile_b = np.full((n_ty, n_tx), b0, dtype=np.float64)
    centers_y = np.empty(n_ty)
    centers_x = np.empty(n_tx)
    joint = mono.valid & disp.valid
    for ty in range(n_ty):
        y0, y1 = ty * tile, min((ty + 1) * tile, h)
        centers_y[ty] = 0.5 * (y0 + y1 - 1)
        for tx in range(n_tx):
            x0, x1 = tx * tile, min((tx + 1) * tile, w)
            if ty == 0:
                centers_x[tx] = 0.5 * (x0 + x1 - 1)
            ok = joint[y0:y1, x0:x1]
            if np.count_nonzero(ok) < local.min_inliers:
                continue
            xs = mono.data[y0:y1, x0:x1][ok].astype(np.float64)
            ys = disp.data[y0:y1, x0:x1][ok].astype(np.float64)
            if np.ptp(xs) == 0.0:
                continue
            a, b = a0, b0
            wgt = np.ones_like(xs)
            for _ in range(config.irls_iters):
                a_new, b_new = _regularized_wls(xs, ys, wgt, local.lambda_reg, a0, b0)
                r = ys - a_new * xs - b_new
                sigma = MAD_TO_SIGMA * np.median(np.abs(r))
                if sigma < 1e-12:
                    a, b = a_new, b_new
                    break
                delta = (config.huber_delta if config.huber_delta is not None
                         else HUBER_MULTIPLIER * sigma)
                absr = np.abs(r)
                wgt = np.where(absr > delta, delta / np.maximum(absr, 1e-300), 1.0)
                if (abs(a_new - a) <= config.tol * max(1.0, abs(a))
                        and abs(b_new - b) <= config.tol * max(1.0, abs(b))):
                    a, b = a_new, b_new
                    break
                a, b = a_new, b_new
            tile_a[ty, tx] = a
            tile_b[ty, tx] = b

    def interp_grid(grid):
        rows = np.empty((n_ty, w), dtype=np.float64)
        xs = np.arange(w, dtype=np.float64)
        for ty in range(n_ty):
            rows[ty] = np.interp(xs, centers_x, grid[ty])
        out = np.empty((h, w), dtype=np.float64)
        ys = np.arange(h, dtype=np.float64)
        for col in range(w):
            out[:, col] = np.interp(ys, centers_y, rows[:, col])
        return out

    return RegistrationField(
        a=interp_grid(tile_a),
        b=interp_grid(tile_b),
        global_a=a0,
        global_b=b0,
        mode="local",
    )


def apply_registration(mono: ScalarField, reg: RegistrationField) -> ScalarField:
    """Element-wise a * mono + b; validity inherited from mono."""
    if reg.a.shape != mono.shape:
        raise DimensionError(
            f"registration shape {reg.a.shape} != mono shape {mono.shape}"
        )
    out = reg.a * mono.data.astype(np.float64) + reg.b
    out = out.astype(np.float32)
    out[~mono.valid] = 0.0
    return ScalarField(out, mono.valid.copy())


def confidence_map(cost_slice: CostSlice, agreement: ScalarField, residual: ScalarField,
                   weights=(0.4, 0.3, 0.3), tau_res: float = 1.0) -> ScalarField:
    """Convex combination of cost-curve sharpness, ordering agreement, and a
    mono/stereo residual term exp(-|residual| / tau_res).

    Sharpness is (second_min - min) / (mean - min + eps) of the center-level
    slice, clamped to [0, 1].
    """
    w_cost, w_agree, w_res = (float(v) for v in weights)
    if min(w_cost, w_agree, w_res) < 0:
        raise ParameterError(f"confidence weights must be >= 0, got {weights}")
    if abs(w_cost + w_agree + w_res - 1.0) > 1e-6:
        raise ParameterError(f"confidence weights must sum to 1, got {weights}")
    if tau_res <= 0:
        raise ParameterError(f"tau_res must be positive, got {tau_res}")
    if agreement.shape != residual.shape or agreement.shape != cost_slice.shape:
        raise DimensionError("confidence inputs have mismatched shapes")
    level = cost_slice.levels[0].astype(np.float64)
    if level.shape[2] < 2:
        sharpness = np.zeros(level.shape[:2])  # single-tap slice carries no contrast
    else:
        part = np.partition(level, 1, axis=2)
        c_min = part[:, :, 0]
        c_second = part[:, :, 1]
        c_mean = level.mean(axis=2)
        sharpness = np.clip((c_second - c_min) / (c_mean - c_min + SHARPNESS_EPS), 0.0, 1.0)
    res_term = np.exp(-np.abs(residual.data.astype(np.float64)) / tau_res)
    c = w_cost * sharpness + w_agree * agreement.data.astype(np.float64) + w_res * res_term
    valid = agreement.valid & residual.valid
    out = np.clip(c, 0.0, 1.0).astype(np.float32)
    out[~valid] = 0.5
    return ScalarField(out, valid)


def fuse(disp: ScalarField, registered_mono: ScalarField, c: ScalarField) -> ScalarField:
    """Per-pixel convex blend c * disp + (1 - c) * registered_mono.

    A pixel valid in exactly one input copies that input; pixels valid in
    neither stay invalid.
    """
    if disp.shape != registered_mono.shape or disp.shape != c.shape:
        raise DimensionError("fuse inputs have mismatched shapes")
    cv = c.data.astype(np.float64)
    if cv.min() < 0.0 or cv.max() > 1.0:
        raise ParameterError("confidence must lie in [0, 1]")
    both = disp.valid & registered_mono.valid
    only_d = disp.valid & ~registered_mono.valid
    only_m = registered_mono.valid & ~disp.valid
    out = np.zeros(disp.shape, dtype=np.float64)
    out[both] = cv[both] * disp.data[both] + (1.0 - cv[both]) * registered_mono.data[both]
    out[only_d] = disp.data[only_d]
    out[only_m] = registered_mono.data[only_m]
    valid = disp.valid | registered_mono.valid
    return ScalarField(out.astype(np.float32), valid)


@dataclass
class FusionResult:
    registered_mono: ScalarField
    confidence: ScalarField
    fused: ScalarField
