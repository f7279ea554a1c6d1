"""Disparity evaluation: EPE, bad-x percentages, region masks, aggregation.

All reductions accumulate in float64 with a fixed order so results are
reproducible bit-for-bit.  Pixels with invalid ground truth are excluded
from every mask (Middlebury convention), as are pixels the prediction
marks invalid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyMaskError, ParameterError, SchemaError
from .grid import ScalarField


@dataclass
class RegionMask:
    """Named boolean pixel-selection mask."""

    name: str
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got shape {self.mask.shape}")

    def union(self, other, name=None):
        if self.mask.shape != other.mask.shape:
            raise DimensionError("mask shapes differ")
        return RegionMask(name or f"{self.name}|{other.name}", self.mask | other.mask)

    def intersect(self, other, name=None):
        if self.mask.shape != other.mask.shape:
            raise DimensionError("mask shapes differ")
        return RegionMask(name or f"{self.name}&{other.name}", self.mask & other.mask)

    def complement(self, name=None):
        return RegionMask(name or f"~{self.name}", ~self.mask)


def _effective_mask(pred: ScalarField, gt: ScalarField, mask: RegionMask):
    if pred.shape != gt.shape:
        raise DimensionError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if mask.mask.shape != gt.shape:
        raise DimensionError(f"mask shape {mask.mask.shape} != field shape {gt.shape}")
    eff = mask.mask & gt.valid & pred.valid
    if not eff.any():
        raise EmptyMaskError(f"mask '{mask.name}' selects no valid pixels")
    return eff


def epe(pred: ScalarField, gt: ScalarField, mask: RegionMask) -> float:
    """Mean absolute disparity error in pixels over the masked valid pixels."""
    eff = _effective_mask(pred, gt, mask)
    err = np.abs(pred.data.astype(np.float64) - gt.data.astype(np.float64))
    return float(np.sum(err[eff]) / np.count_nonzero(eff))


def bad_x(pred: ScalarField, gt: ScalarField, mask: RegionMask, x: float, strict: bool = False) -> float:
    """Percentage of masked valid pixels whose error is at least ``x`` pixels.

    The threshold comparison is >= by default; ``strict`` switches to > for
    cross-toolkit comparison.
    """
    if x <= 0:
        raise ParameterError(f"bad-x threshold must be positive, got {x}")
    eff = _effective_mask(pred, gt, mask)
    err = np.abs(pred.data.astype(np.float64) - gt.data.astype(np.float64))[eff]
    bad = (err > x) if strict else (err >= x)
    return float(100.0 * np.count_nonzero(bad) / err.size)


def occlusion_mask(gt_left_disp: ScalarField, gt_right_disp: ScalarField, tol: float = 1.0) -> RegionMask:
    """Left-image occlusion from left-right consistency of GT disparities.

    A pixel is occluded when its projection into the right image falls
    outside the frame, lands on invalid right GT, or the right disparity
    sampled there disagrees with the left disparity by more than ``tol``.
    """
    if gt_left_disp.shape != gt_right_disp.shape:
        raise DimensionError(
            f"left shape {gt_left_disp.shape} != right shape {gt_right_disp.shape}"
        )
    h, w = gt_left_disp.shape
    dl = gt_left_disp.data.astype(np.float64)
    xs = np.arange(w, dtype=np.float64)[None, :] - dl
    in_range = (xs >= 0.0) & (xs <= w - 1)
    xs_safe = np.where(in_range, xs, 0.0)
    x0 = np.floor(xs_safe).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    f = xs_safe - x0
    rows = np.arange(h)[:, None]
    dr = gt_right_disp.data.astype(np.float64)
    sampled = dr[rows, x0] * (1.0 - f) + dr[rows, x1] * f
    tap_valid = np.where(f > 0.0,
                         gt_right_disp.valid[rows, x0] & gt_right_disp.valid[rows, x1],
                         gt_right_disp.valid[rows, x0])
    mismatch = np.abs(dl - sampled) > tol
    occluded = (~in_range) | (~tap_valid) | (in_range & tap_valid & mismatch)
    occluded &= gt_left_disp.valid
    return RegionMask("occ", occluded)


def standard_masks(gt_left_disp: ScalarField, gt_right_disp: ScalarField, tol: float = 1.0):
    """The all / occ / nonocc mask triple derived from a GT disparity pair."""
    occ = occlusion_mask(gt_left_disp, gt_right_disp, tol)
    valid = gt_left_disp.valid
    return {
        "all": RegionMask("all", np.ones_like(valid)),
        "occ": RegionMask("occ", occ.mask & valid),
        "nonocc": RegionMask("nonocc", ~occ.mask & valid),
    }


@dataclass
class EvalReport:
    """Metric values per (mask, metric) with optional cross-run statistics."""

    metrics: dict = field(default_factory=dict)   # mask -> metric -> value
    counts: dict = field(default_factory=dict)    # mask -> evaluated pixel count
    stats: dict = field(default_factory=dict)     # mask -> metric -> {"mean","std"}
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for mask_name, metric_map in self.metrics.items():
            for key, value in metric_map.items():
                if not np.isfinite(value):
                    raise SchemaError(f"non-finite metric {mask_name}/{key}")
                if key.startswith("bad") and not (0.0 <= value <= 100.0):
                    raise SchemaError(
                        f"bad-x metric {mask_name}/{key}={value} outside [0, 100]"
                    )

    def key_set(self):
        return {(m, k) for m, mm in self.metrics.items() for k in mm}


def evaluate(pred: ScalarField, gt: ScalarField, masks, bad_thresholds=(1.0, 2.0, 3.0, 5.0)) -> EvalReport:
    """EPE and bad-x per mask as a report; masks is a name -> RegionMask map."""
    if pred.shape != gt.shape:
        raise DimensionError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    metrics = {}
    counts = {}
    for name, mask in masks.items():
        eff = mask.mask & gt.valid & pred.valid
        counts[name] = int(np.count_nonzero(eff))
        entry = {"epe": epe(pred, gt, mask)}
        for x in bad_thresholds:
            entry[f"bad{x:g}"] = bad_x(pred, gt, mask, x)
        metrics[name] = entry
    return EvalReport(metrics=metrics, counts=counts)


def aggregate(reports) -> EvalReport:
    """Mean and population std per (mask, metric) key across reports."""
    reports = list(reports)
    if not reports:
        raise SchemaError("aggregate needs at least one report")
    keys = reports[0].key_set()
    for i, rep in enumerate(reports[1:], start=2):
        if rep.key_set() != keys:
            raise SchemaError(f"report {i} has a different (mask, metric) key set")
    metrics = {}
    stats = {}
    for mask_name in reports[0].metrics:
        metrics[mask_name] = {}
        stats[mask_name] = {}
        for key in reports[0].metrics[mask_name]:
            values = np.array([r.metrics[mask_name][key] for r in reports], dtype=np.float64)
            mean = float(values.mean())
            std = float(values.std(ddof=0))
            metrics[mask_name][key] = mean
            stats[mask_name][key] = {"mean": mean, "std": std}
    return EvalReport(metrics=metrics, counts=dict(reports[0].counts), stats=stats)


def mean_std_string(mean: float, std: float, digits: int = 2) -> str:
    """Paper-style "mean±std" rendering."""
    return f"{mean:.{digits}f}±{std:.{digits}f}"
