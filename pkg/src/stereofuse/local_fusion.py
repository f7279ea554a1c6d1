"""Iterative disparity refinement guided by ordering-map agreement.

Guidance per pixel is Beta(alpha, beta)-parameterized and synthesized from
the mono/stereo ordering agreement: disagreement raises the guidance, which
amplifies the matching update by the factor (1 + g * r * t / T) that grows
over the iteration schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .grid import ScalarField
from .matching import CostSlice, CostVolume, lookup, matching_update
from .ordering import OrderingStack, ordering_agreement, ordering_map


@dataclass
class GuidanceField:
    """Per-pixel Beta parameters and the guidance value used for re-weighting.

    In deterministic mode g = alpha / (alpha + beta) exactly; in sampling
    mode g holds the Beta draw.
    """

    alpha: np.ndarray
    beta: np.ndarray
    g: np.ndarray
    valid: np.ndarray


def guidance_from_agreement(agreement: ScalarField, kappa: float = 4.0) -> GuidanceField:
    """Beta parameters alpha = 1 + kappa*(1 - agreement), beta = 1 + kappa*agreement.

    Guidance is high where mono and stereo orderings disagree and is exactly
    0.5 at full ambiguity.
    """
    if kappa <= 0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    a = agreement.data.astype(np.float64)
    ok = agreement.valid
    if ok.any():
        lo = a[ok].min()
        hi = a[ok].max()
        if lo < 0.0 or hi > 1.0:
            raise ParameterError(f"agreement must lie in [0, 1], found [{lo}, {hi}]")
    alpha = 1.0 + kappa * (1.0 - a)
    beta = 1.0 + kappa * a
    g = alpha / (alpha + beta)
    g[~ok] = 0.5
    alpha[~ok] = 1.0
    beta[~ok] = 1.0
    return GuidanceField(alpha, beta, g, ok.copy())


def sample_gamma(shape, rng):
    """Unit-scale Gamma draws, Marsaglia-Tsang squeeze for shape >= 1 and the
    boost transform G(a) = G(a + 1) * U^(1/a) below 1.  Vectorized; the draw
    order is fixed, so a seeded generator reproduces sequences exactly."""
    a = np.asarray(shape, dtype=np.float64)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    if np.any(a <= 0):
        raise ParameterError("gamma shape parameters must be positive")
    flat = a.ravel()
    boost = flat < 1.0
    d = np.where(boost, flat + 1.0, flat) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(flat)
    pending = np.ones(flat.size, dtype=bool)
    while pending.any():
        idx = np.nonzero(pending)[0]
        x = rng.standard_normal(idx.size)
        v = (1.0 + c[idx] * x) ** 3
        u = rng.random(idx.size)
        ok_v = v > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            squeeze = u < 1.0 - 0.0331 * x ** 4
            slow = np.log(u) < 0.5 * x ** 2 + d[idx] * (1.0 - v + np.log(np.where(ok_v, v, 1.0)))
        accept = ok_v & (squeeze | slow)
        take = idx[accept]
        out[take] = d[take] * v[accept]
        pending[take] = False
    if boost.any():
        u = rng.random(int(boost.sum()))
        out[boost] *= u ** (1.0 / flat[boost])
    if scalar:
        return float(out[0])
    return out.reshape(a.shape)


def guidance_sample(alpha, beta, rng):
    """One Beta(alpha, beta) variate per element via g1 / (g1 + g2) with
    g1 ~ Gamma(alpha, 1) and g2 ~ Gamma(beta, 1)."""
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ParameterError("Beta shape parameters must be positive")
    g1 = sample_gamma(a, rng)
    g2 = sample_gamma(b, rng)
    return g1 / (g1 + g2)


def reweight_update(delta: ScalarField, g: ScalarField, r: float, t: int, T: int) -> ScalarField:
    """Re-weighted update delta * (1 + g * r * t / T); the guidance influence
    is released gradually over the schedule.  Invalid pixels pass through."""
    if not 1 <= t <= T:
        raise ParameterError(f"iteration index t={t} outside [1, {T}]")
    if r < 0:
        raise ParameterError(f"amplitude r must be >= 0, got {r}")
    both = delta.valid & g.valid
    if both.any():
        gv = g.data[both]
        if gv.min() < 0.0 or gv.max() > 1.0:
            raise ParameterError("guidance values must lie in [0, 1]")
    factor = np.where(g.valid, 1.0 + g.data.astype(np.float64) * r * t / T, 1.0)
    out = delta.data.astype(np.float64) * factor
    out = out.astype(np.float32)
    out[~delta.valid] = delta.data[~delta.valid]
    return ScalarField(out, delta.valid.copy())


@dataclass
class LocalFusionConfig:
    iterations: int = 8          # T
    amplitude: float = 1.0       # r
    radius: int = 4
    temperature: float = 0.01
    kappa: float = 4.0
    sample_mode: bool = False
    seed: int = 0
    pre_scale: float = 1.0
    use_sigmoid: bool = True

    def validated(self):
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")
        if self.amplitude < 0:
            raise ParameterError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        if self.radius < 0:
            raise ParameterError(f"radius must be >= 0, got {self.radius}")
        return self


@dataclass
class IterationTrace:
    """All iterates plus the last iteration's guidance inputs, kept for the
    global fusion stage."""

    disparities: list = field(default_factory=list)
    guidance: list = field(default_factory=list)
    final_slice: CostSlice | None = None
    final_agreement: ScalarField | None = None

    @property
    def final(self) -> ScalarField:
        return self.disparities[-1]


def iterate(volume: CostVolume, init: ScalarField, mono_ordering: OrderingStack | None,
            config: LocalFusionConfig) -> IterationTrace:
    """Run the guided refinement loop.

    Each iteration recomputes the stereo ordering map from the current
    disparity, derives guidance from its agreement with the monocular map,
    samples the cost volume around the current estimate, re-weights the
    softmin update, and adds it.  Disparities stay clamped to
    [0, d_max - 1].  With ``mono_ordering`` absent the loop degrades to
    plain matching refinement (guidance inert).
    """
    config = config.validated()
    d_hi = volume.d_max - 1
    dvals = init.data[init.valid]
    if dvals.size and (dvals.min() < 0.0 or dvals.max() > d_hi):
        raise ParameterError(f"init disparity outside [0, {d_hi}]")
    rng = np.random.Generator(np.random.Philox(config.seed)) if config.sample_mode else None
    trace = IterationTrace()
    current = init
    T = config.iterations
    for t in range(1, T + 1):
        guidance_field = None
        agreement = None
        if mono_ordering is not None:
            stereo = ordering_map(current, mono_ordering.windows,
                                  use_sigmoid=mono_ordering.sigmoid,
                                  pre_scale=config.pre_scale)
            agreement = ordering_agreement(mono_ordering, stereo)
            guidance_field = guidance_from_agreement(agreement, config.kappa)
            if config.sample_mode:
                g = guidance_sample(guidance_field.alpha, guidance_field.beta, rng)
                g = np.clip(g, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
                guidance_field = replace(guidance_field, g=g)
        cost_slice = lookup(volume, current, config.radius)
        delta = matching_update(cost_slice, config.radius, config.temperature)
        if guidance_field is not None:
            g_field = ScalarField(guidance_field.g.astype(np.float32), guidance_field.valid)
            delta = reweight_update(delta, g_field, config.amplitude, t, T)
        new_data = np.clip(
            current.data.astype(np.float64) + delta.data.astype(np.float64), 0.0, d_hi
        ).astype(np.float32)
        current = ScalarField(new_data, current.valid.copy())
        trace.disparities.append(current)
        trace.guidance.append(guidance_field)
        if t == T:
            trace.final_slice = cost_slice
            trace.final_agreement = agreement
    return trace
