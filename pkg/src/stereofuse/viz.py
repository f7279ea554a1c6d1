"""Colormapped rendering of scalar fields to RGB images.

Normalization is min-max over valid pixels or a caller-fixed range; invalid
pixels render magenta.  The "turbo" map uses the standard fifth-order
polynomial approximation.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMaskError, ParameterError
from .grid import ImageBuffer, ScalarField

_INVALID_RGB = (1.0, 0.0, 1.0)


def _turbo(t):
    r = 34.61 + t * (1172.33 + t * (-10793.56 + t * (33300.12 + t * (-38394.49 + t * 14825.05))))
    g = 23.31 + t * (557.33 + t * (1225.33 + t * (-3574.96 + t * (3826.64 + t * -1434.27))))
    b = 27.2 + t * (3211.1 + t * (-15327.97 + t * (27814.0 + t * (-22569.18 + t * 6838.66))))
    return np.stack([r, g, b], axis=-1) / 255.0


def _gray(t):
    return np.stack([t, t, t], axis=-1)


_CMAPS = {"turbo": _turbo, "gray": _gray}


def render_field(field: ScalarField, cmap: str = "turbo",
                 vmin: float | None = None, vmax: float | None = None) -> ImageBuffer:
    """Colormapped RGB rendering; constant fields map to the midpoint color."""
    if cmap not in _CMAPS:
        raise ParameterError(f"unknown colormap '{cmap}' (choose from {sorted(_CMAPS)})")
    if not field.valid.any():
        raise EmptyMaskError("field has no valid pixels to render")
    data = field.data.astype(np.float64)
    if vmin is None or vmax is None:
        values = data[field.valid]
        lo = values.min() if vmin is None else vmin
        hi = values.max() if vmax is None else vmax
    else:
        lo, hi = vmin, vmax
    if hi > lo:
        t = np.clip((data - lo) / (hi - lo), 0.0, 1.0)
    else:
        t = np.full_like(data, 0.5)
    rgb = np.clip(_CMAPS[cmap](t), 0.0, 1.0)
    rgb[~field.valid] = _INVALID_RGB
    return ImageBuffer(rgb.astype(np.float32))
