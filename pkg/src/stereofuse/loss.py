"""Sequence supervision loss over an iteration trace, evaluated (not trained),
plus a finite-difference check of its L1 subgradients.

The total is sum_t gamma^(T+2-t) * mae(D_t) + gamma * mae(registered mono)
+ mae(fused), with the mean absolute error taken over valid-GT pixels.  The
exponent convention gives the last iterate weight gamma^2; the widely used
alternative gamma^(T-t) is available as ``exponent_mode="raft"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, ParameterError
from .grid import ScalarField


def masked_mae(pred: ScalarField, gt: ScalarField) -> float:
    """Mean absolute error over valid-GT pixels, float64 fixed order."""
    if pred.shape != gt.shape:
        raise ParameterError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    ok = gt.valid
    if not ok.any():
        raise EmptyMaskError("no valid ground-truth pixels")
    err = np.abs(pred.data.astype(np.float64) - gt.data.astype(np.float64))
    return float(np.sum(err[ok]) / np.count_nonzero(ok))


@dataclass
class LossBreakdown:
    iteration_terms: list    # weighted, one per iterate
    iteration_weights: list
    mono_term: float         # gamma * mae(registered mono)
    fusion_term: float       # mae(fused)
    total: float

    def to_dict(self):
        """Plain mapping for embedding in a JSON report."""
        return {
            "iteration_terms": [float(v) for v in self.iteration_terms],
            "iteration_weights": [float(v) for v in self.iteration_weights],
            "mono_term": float(self.mono_term),
            "fusion_term": float(self.fusion_term),
            "total": float(self.total),
        }


def sequence_loss(trace, registered_mono: ScalarField, fused: ScalarField,
                  gt: ScalarField, gamma: float = 0.9,
                  exponent_mode: str = "paper") -> LossBreakdown:
    """Weighted L1 supervision of every iterate, the registered mono map, and
    the fused output.  ``trace`` may be an IterationTrace or a plain list of
    disparity fields D_1..D_T."""
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    if exponent_mode not in ("paper", "raft"):
        raise ParameterError(f"unknown exponent_mode '{exponent_mode}'")
    disparities = getattr(trace, "disparities", trace)
    T = len(disparities)
    if T < 1:
        raise ParameterError("trace must hold at least one iterate")
    terms = []
    weights = []
    for t, field in enumerate(disparities, start=1):
        exponent = (T + 2 - t) if exponent_mode == "paper" else (T - t)
        weight = gamma ** exponent
        weights.append(weight)
        terms.append(weight * masked_mae(field, gt))
    mono_term = gamma * masked_mae(registered_mono, gt)
    fusion_term = masked_mae(fused, gt)
    total = float(np.sum(np.array(terms + [mono_term, fusion_term], dtype=np.float64)))
    return LossBreakdown(terms, weights, mono_term, fusion_term, total)


@dataclass
class FdCheckResult:
    max_rel_dev: float
    checked: int
    skipped: int


def fd_gradient_check(loss_at, field: ScalarField, gt: ScalarField,
                      weight: float = 1.0, eps: float = 1e-4) -> FdCheckResult:
    """Central-difference check of the weighted-L1 subgradient.

    ``loss_at`` maps a field to the scalar term weight * mae(field, gt).
    The analytic per-pixel subgradient is sign(residual) * weight / N over
    valid-GT pixels; pixels whose residual sits within 10 * eps of the L1
    kink are skipped and reported.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    ok = gt.valid
    n = int(np.count_nonzero(ok))
    if n == 0:
        raise EmptyMaskError("no valid ground-truth pixels")
    residual = field.data.astype(np.float64) - gt.data.astype(np.float64)
    max_rel = 0.0
    checked = 0
    skipped = 0
    ys, xs = np.nonzero(ok)
    for y, x in zip(ys, xs):
        if abs(residual[y, x]) <= 10.0 * eps:
            skipped += 1
            continue
        analytic = np.sign(residual[y, x]) * weight / n
        plus = field.data.copy()
        plus[y, x] = np.float32(float(plus[y, x]) + eps)
        minus = field.data.copy()
        minus[y, x] = np.float32(float(minus[y, x]) - eps)
        # fields are float32; divide by the realized step, not the nominal one
        step = float(plus[y, x]) - float(minus[y, x])
        lp = loss_at(ScalarField(plus, field.valid))
        lm = loss_at(ScalarField(minus, field.valid))
        numeric = (lp - lm) / step
        rel = abs(numeric - analytic) / max(abs(analytic), 1e-300)
        max_rel = max(max_rel, rel)
        checked += 1
    return FdCheckResult(max_rel, checked, skipped)
