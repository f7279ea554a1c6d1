"""Binary local ordering maps: soft (sigmoid) center-vs-neighbor comparisons
over a set of window sizes, and the agreement signal between two maps.

The comparison is LBP-like with fixed weights: for each window the channels
enumerate all non-center neighbors in row-major raster order.  At the sign
level (value vs 0.5) the map is invariant to positive affine transforms of
the input, which is what lets relative monocular depth and absolute
disparity share one representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .grid import ScalarField

# float sigmoid saturates for large inputs; keep channels strictly inside (0, 1)
_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


@dataclass
class OrderingStack:
    """Multi-channel neighbor-comparison field.

    ``channels`` has shape (C, H, W) with C = sum(k*k - 1) over the window
    list; layout is window-major, neighbors in raster order.  A pixel is
    valid only if the center and every clamped tap were valid.
    """

    channels: np.ndarray
    windows: tuple
    sigmoid: bool
    valid: np.ndarray

    def __post_init__(self):
        self.windows = tuple(int(k) for k in self.windows)
        expected = sum(k * k - 1 for k in self.windows)
        if self.channels.shape[0] != expected:
            raise DimensionError(
                f"channel count {self.channels.shape[0]} != {expected} for windows {self.windows}"
            )
        if self.valid.shape != self.channels.shape[1:]:
            raise DimensionError("valid mask shape mismatch")

    @property
    def channel_count(self):
        return self.channels.shape[0]

    @property
    def shape(self):
        return self.channels.shape[1:]


def ordering_map(field: ScalarField, windows=(5, 3), use_sigmoid: bool = True,
                 pre_scale: float = 1.0) -> OrderingStack:
    """Soft ordering comparisons sigma(pre_scale * (neighbor - center)) for every
    non-center neighbor of every window, or raw differences when
    ``use_sigmoid`` is off.  Borders clamp to the edge; a pixel with any
    invalid tap is invalid."""
    windows = tuple(int(k) for k in windows)
    if not windows:
        raise ParameterError("window list must not be empty")
    for k in windows:
        if k % 2 == 0 or k < 3:
            raise ParameterError(f"ordering windows must be odd and >= 3, got {k}")
    if pre_scale <= 0:
        raise ParameterError(f"pre_scale must be positive, got {pre_scale}")
    h, w = field.shape
    data = field.data.astype(np.float64)
    total = sum(k * k - 1 for k in windows)
    channels = np.empty((total, h, w), dtype=np.float64)
    valid = field.valid.copy()
    c = 0
    for k in windows:
        r = k // 2
        padded = np.pad(data, r, mode="edge")
        padded_valid = np.pad(field.valid, r, mode="edge")
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if dy == 0 and dx == 0:
                    continue
                neighbor = padded[r + dy : r + dy + h, r + dx : r + dx + w]
                diff = pre_scale * (neighbor - data)
                if use_sigmoid:
                    with np.errstate(over="ignore"):
                        channels[c] = np.clip(1.0 / (1.0 + np.exp(-diff)), _SIG_LO, _SIG_HI)
                else:
                    channels[c] = diff
                valid &= padded_valid[r + dy : r + dy + h, r + dx : r + dx + w]
                c += 1
    neutral = 0.5 if use_sigmoid else 0.0
    channels[:, ~valid] = neutral
    return OrderingStack(channels, windows, use_sigmoid, valid)


def ordering_agreement(mono: OrderingStack, stereo: OrderingStack) -> ScalarField:
    """Fraction of channels whose orderings point the same way.

    Channels sitting exactly on the tie point count as agreeing.  The result
    lies in [0, 1]; a pixel is valid where both stacks are.
    """
    if mono.windows != stereo.windows:
        raise DimensionError(
            f"window lists differ: {mono.windows} vs {stereo.windows}"
        )
    if mono.shape != stereo.shape:
        raise DimensionError(f"stack shapes differ: {mono.shape} vs {stereo.shape}")
    if mono.sigmoid != stereo.sigmoid:
        raise DimensionError("cannot compare sigmoid and raw ordering stacks")
    center = 0.5 if mono.sigmoid else 0.0
    dm = mono.channels - center
    ds = stereo.channels - center
    agree = (np.sign(dm) == np.sign(ds)) | (dm == 0.0) | (ds == 0.0)
    value = agree.mean(axis=0, dtype=np.float64)
    valid = mono.valid & stereo.valid
    out = value.astype(np.float32)
    out[~valid] = 0.0
    return ScalarField(out, valid)


def thresholded(stack: OrderingStack) -> np.ndarray:
    """Hard ordering signs per channel: -1 / 0 / +1 against the tie point."""
    center = 0.5 if stack.sigmoid else 0.0
    return np.sign(stack.channels - center).astype(np.int8)
