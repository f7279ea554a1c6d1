"""End-to-end disparity pipeline.

Matching runs at quarter input resolution: luma, census features, cost
volume, WTA init, then the guided iterative refinement.  With a monocular
depth input the global fusion stage registers it to the optimized disparity
and blends by confidence; the final disparity is upsampled (and value-scaled)
back to full resolution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import DegenerateInputError, DimensionError, InsufficientDataError
from .global_fusion import (
    FusionResult,
    LocalRegistrationConfig,
    RegistrationConfig,
    RegistrationField,
    apply_registration,
    confidence_map,
    fuse,
    register_global,
    register_local,
)
from .grid import ImageBuffer, ScalarField, bilinear_resize, field_from_gray, gray_image_from_field
from .local_fusion import IterationTrace, LocalFusionConfig, iterate
from .matching import build_cost_volume, census_transform, wta_init
from .metrics import RegionMask, epe
from .ordering import ordering_map


@dataclass
class PipelineResult:
    disparity: ScalarField               # full-res final output (D_f, or D_d^T without mono)
    matching_disparity: ScalarField      # full-res matching-only disparity D_d^T
    trace: IterationTrace
    fusion: FusionResult | None
    registration: RegistrationField | None
    degraded: bool                       # registration failed; fell back to D_d^T
    degraded_reason: str
    quarter: dict                        # quarter-res intermediates
    runtime_s: float


def _quarter_dims(w, h):
    return max(1, w // 4), max(1, h // 4)


def _box_prefilter(data, k=4):
    """Separable k x k box filter with edge clamping; anti-aliases the 4x
    image reduction (2-tap bilinear alone would alias fine texture)."""
    out = data.astype(np.float64)
    pad = k // 2
    for axis in (0, 1):
        n = out.shape[axis]
        idx = np.clip(np.arange(-pad, n + k - 1 - pad), 0, n - 1)
        padded = np.take(out, idx, axis=axis)
        c = np.cumsum(padded, axis=axis)
        lead = np.take(c, np.arange(k - 1, k - 1 + n), axis=axis)
        lag = np.concatenate(
            [np.zeros_like(np.take(c, [0], axis=axis)),
             np.take(c, np.arange(0, n - 1), axis=axis)],
            axis=axis,
        )
        out = (lead - lag) / k
    return out


def _downsample_image(field: ScalarField, qw: int, qh: int) -> ScalarField:
    smoothed = ScalarField(_box_prefilter(field.data).astype(np.float32), field.valid)
    return bilinear_resize(smoothed, qw, qh)


def run_pipeline(left: ImageBuffer, right: ImageBuffer, mono: ScalarField | None,
                 config: PipelineConfig) -> PipelineResult:
    config.validate()
    t_start = time.perf_counter()
    if (left.height, left.width) != (right.height, right.width):
        raise DimensionError(
            f"left {left.height}x{left.width} and right {right.height}x{right.width} differ"
        )
    if mono is not None and mono.shape != (left.height, left.width):
        raise DimensionError(
            f"mono shape {mono.shape} != image shape {(left.height, left.width)}"
        )
    h, w = left.height, left.width
    qw, qh = _quarter_dims(w, h)

    left_q = _downsample_image(field_from_gray(left), qw, qh)
    right_q = _downsample_image(field_from_gray(right), qw, qh)
    census_l = census_transform(gray_image_from_field(left_q), config.census_window)
    census_r = census_transform(gray_image_from_field(right_q), config.census_window)
    volume = build_cost_volume(census_l, census_r, config.d_max, config.pyramid_levels)
    init = wta_init(volume)

    mono_q = None
    mono_stack = None
    if mono is not None:
        mono_q = bilinear_resize(mono, qw, qh, scale_values=False)
        if config.guidance_enabled:
            mono_stack = ordering_map(mono_q, config.windows,
                                      use_sigmoid=config.use_sigmoid,
                                      pre_scale=config.pre_scale)

    lf_config = LocalFusionConfig(
        iterations=config.iterations,
        amplitude=config.amplitude,
        radius=config.radius,
        temperature=config.temperature,
        kappa=config.kappa,
        sample_mode=config.sample_mode,
        seed=config.seed,
        pre_scale=config.pre_scale,
        use_sigmoid=config.use_sigmoid,
    )
    trace = iterate(volume, init, mono_stack, lf_config)
    d_final_q = trace.final

    fusion = None
    registration = None
    degraded = False
    degraded_reason = ""
    fused_q = None
    if mono is not None and config.gf:
        try:
            if config.registration == "off":
                registration = RegistrationField(
                    a=np.ones(d_final_q.shape, dtype=np.float64),
                    b=np.zeros(d_final_q.shape, dtype=np.float64),
                    global_a=1.0, global_b=0.0, mode="global",
                )
            else:
                reg_config = RegistrationConfig(
                    irls_iters=config.irls_iters, min_inliers=config.min_inliers
                )
                if config.registration == "local":
                    registration = register_local(
                        mono_q, d_final_q, reg_config,
                        LocalRegistrationConfig(tile=config.tile, lambda_reg=config.lambda_reg),
                    )
                else:
                    registration = register_global(mono_q, d_final_q, reg_config)
            registered = apply_registration(mono_q, registration)
            residual_data = np.abs(d_final_q.data.astype(np.float64)
                                   - registered.data.astype(np.float64)).astype(np.float32)
            residual_valid = d_final_q.valid & registered.valid
            residual_data[~residual_valid] = 0.0
            residual = ScalarField(residual_data, residual_valid)
            if trace.final_agreement is not None:
                agreement = trace.final_agreement
            else:
                agreement = ScalarField(
                    np.full(d_final_q.shape, 0.5, dtype=np.float32),
                    np.ones(d_final_q.shape, dtype=bool),
                )
            conf = confidence_map(
                trace.final_slice, agreement, residual,
                weights=(config.w_cost, config.w_agree, config.w_res),
                tau_res=config.tau_res,
            )
            fused_q = fuse(d_final_q, registered, conf)
            fusion = FusionResult(registered_mono=registered, confidence=conf, fused=fused_q)
        except (InsufficientDataError, DegenerateInputError) as exc:
            degraded = True
            degraded_reason = str(exc)
            registration = None

    matching_full = bilinear_resize(d_final_q, w, h, scale_values=True)
    if fused_q is not None:
        final_full = bilinear_resize(fused_q, w, h, scale_values=True)
    else:
        final_full = matching_full

    return PipelineResult(
        disparity=final_full,
        matching_disparity=matching_full,
        trace=trace,
        fusion=fusion,
        registration=registration,
        degraded=degraded,
        degraded_reason=degraded_reason,
        quarter={
            "volume": volume,
            "init": init,
            "disparity": d_final_q,
            "mono": mono_q,
            "fused": fused_q,
        },
        runtime_s=time.perf_counter() - t_start,
    )


def per_iteration_epe(result: PipelineResult, gt: ScalarField):
    """Full-resolution EPE of every iterate against GT (mask: all pixels)."""
    h, w = gt.shape
    mask = RegionMask("all", np.ones((h, w), dtype=bool))
    values = []
    for field in result.trace.disparities:
        full = bilinear_resize(field, w, h, scale_values=True)
        values.append(epe(full, gt, mask))
    return values
