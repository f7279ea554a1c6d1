"""Core grid containers and sampling primitives.

Conventions used throughout the toolkit: pixel centers sit at integer
coordinates, the origin is the top-left pixel, and disparity is positive
leftward (right-image content appears shifted left).  Fields carry an
explicit validity mask; images clamp to their edges instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass
class ScalarField:
    """H x W real-valued grid with a per-pixel validity mask.

    ``data`` is float32 row-major; every valid entry must be finite.
    Invalid entries may hold any payload (they are never read for math).
    """

    data: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise DimensionError(f"field data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DimensionError(f"field must be non-empty, got shape {self.data.shape}")
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        if self.valid.shape != self.data.shape:
            raise DimensionError(
                f"valid mask shape {self.valid.shape} != data shape {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data[self.valid])):
            raise ParameterError("valid pixels must hold finite values")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def from_array(cls, arr, valid=None):
        arr = np.asarray(arr, dtype=np.float32)
        if valid is None:
            valid = np.isfinite(arr)
        return cls(arr, valid)

    @classmethod
    def full(cls, height, width, value, valid=True):
        data = np.full((height, width), value, dtype=np.float32)
        mask = np.full((height, width), valid, dtype=bool)
        return cls(data, mask)

    def copy(self):
        return ScalarField(self.data.copy(), self.valid.copy())


@dataclass
class ImageBuffer:
    """H x W x C image with real samples in [0, 1]; C is 1 or 3."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3 or self.data.shape[2] not in (1, 3):
            raise DimensionError(
                f"image must be HxWx1 or HxWx3, got shape {self.data.shape}"
            )
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DimensionError("image must be non-empty")
        if not np.all(np.isfinite(self.data)):
            raise ParameterError("image samples must be finite")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ParameterError("image samples must lie in [0, 1]")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    def to_gray(self):
        """Rec.601 luma as a single-channel image."""
        if self.channels == 1:
            return self
        luma = (
            0.299 * self.data[:, :, 0]
            + 0.587 * self.data[:, :, 1]
            + 0.114 * self.data[:, :, 2]
        )
        return ImageBuffer(np.clip(luma, 0.0, 1.0)[:, :, None])


def _edge_aligned_positions(n_out, n_in):
    """Source positions for edge-aligned (corner-matching) resampling."""
    if n_out == 1:
        return np.zeros(1, dtype=np.float64)
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def bilinear_resize(field: ScalarField, new_w: int, new_h: int, scale_values: bool = False) -> ScalarField:
    """Resample a field to (new_w, new_h) with edge-aligned bilinear taps.

    With ``scale_values`` set (disparity role) the values are multiplied by
    ``new_w / width``.  An output pixel is valid only if every source tap
    that carries weight is valid.
    """
    if new_w < 1 or new_h < 1:
        raise DimensionError(f"target size must be >= 1, got {new_w}x{new_h}")
    h, w = field.shape
    xs = _edge_aligned_positions(new_w, w)
    ys = _edge_aligned_positions(new_h, h)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0

    d = field.data.astype(np.float64)
    v = field.valid

    wy0 = (1.0 - fy)[:, None]
    wy1 = fy[:, None]
    wx0 = (1.0 - fx)[None, :]
    wx1 = fx[None, :]

    out = (
        d[np.ix_(y0, x0)] * (wy0 * wx0)
        + d[np.ix_(y0, x1)] * (wy0 * wx1)
        + d[np.ix_(y1, x0)] * (wy1 * wx0)
        + d[np.ix_(y1, x1)] * (wy1 * wx1)
    )
    # zero-weight taps must not poison validity (identity resize keeps masks)
    ok = np.ones((new_h, new_w), dtype=bool)
    for vy, wy in ((y0, wy0), (y1, wy1)):
        for vx, wx in ((x0, wx0), (x1, wx1)):
            used = (wy * wx) > 0.0
            ok &= v[np.ix_(vy, vx)] | ~used
    if scale_values:
        out *= new_w / w
    out = out.astype(np.float32)
    out[~ok] = 0.0
    return ScalarField(out, ok)


def _sample_row_linear(data, xs, clamp):
    """Linear interpolation of each row of ``data`` at per-pixel positions ``xs``."""
    h, w = data.shape[:2]
    if clamp:
        xs = np.clip(xs, 0.0, w - 1)
    x0 = np.floor(xs).astype(np.int64)
    x0 = np.clip(x0, 0, w - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    f = (xs - x0).astype(np.float64)
    rows = np.arange(h)[:, None]
    if data.ndim == 2:
        return data[rows, x0] * (1.0 - f) + data[rows, x1] * f
    return data[rows, x0] * (1.0 - f)[..., None] + data[rows, x1] * f[..., None]


def warp_horizontal(source, disparity: ScalarField):
    """Sample ``source`` at (u - disparity(u, v), v).

    Fields mark out-of-image or invalid-tap samples invalid; images clamp
    to the edge and ignore validity.  Returns the same kind as ``source``.
    """
    h, w = disparity.shape
    if isinstance(source, ScalarField):
        if source.shape != (h, w):
            raise DimensionError(
                f"source shape {source.shape} != disparity shape {(h, w)}"
            )
        xs = np.arange(w, dtype=np.float64)[None, :] - disparity.data.astype(np.float64)
        in_range = (xs >= 0.0) & (xs <= w - 1)
        out = _sample_row_linear(source.data.astype(np.float64), np.where(in_range, xs, 0.0), clamp=True)
        x0 = np.clip(np.floor(np.where(in_range, xs, 0.0)).astype(np.int64), 0, w - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        f = np.where(in_range, xs, 0.0) - x0
        rows = np.arange(h)[:, None]
        tap_ok = np.where(f > 0.0, source.valid[rows, x0] & source.valid[rows, x1],
                          source.valid[rows, x0])
        ok = in_range & tap_ok & disparity.valid
        out = out.astype(np.float32)
        out[~ok] = 0.0
        return ScalarField(out, ok)
    if isinstance(source, ImageBuffer):
        if (source.height, source.width) != (h, w):
            raise DimensionError(
                f"source shape {(source.height, source.width)} != disparity shape {(h, w)}"
            )
        xs = np.arange(w, dtype=np.float64)[None, :] - disparity.data.astype(np.float64)
        out = _sample_row_linear(source.data.astype(np.float64), xs, clamp=True)
        return ImageBuffer(np.clip(out, 0.0, 1.0).astype(np.float32))
    raise ParameterError(f"unsupported source type {type(source).__name__}")


def field_from_gray(image: ImageBuffer) -> ScalarField:
    """Luma of an image as an all-valid field."""
    gray = image.to_gray()
    return ScalarField(gray.data[:, :, 0].copy(), np.ones(gray.data.shape[:2], dtype=bool))


def gray_image_from_field(field: ScalarField) -> ImageBuffer:
    """Field values clipped to [0, 1] as a single-channel image."""
    return ImageBuffer(np.clip(field.data, 0.0, 1.0)[:, :, None])
