"""Bilinear resampling with half-pixel centres (``align_corners=False``)."""

from __future__ import annotations

import numpy as np

from .errors import InvalidParams
from .grid import as_grid


def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(g, out_h: int, out_w: int) -> np.ndarray:
    """Resample ``g`` to ``(out_h, out_w)``.

    Interpolation is written as ``a + f * (b - a)`` so constant regions stay
    exactly constant, and the result is clipped to the input range since
    bilinear weights are convex.
    """
    g = as_grid(g)
    if out_h < 1 or out_w < 1:
        raise InvalidParams(f"output size must be positive, got {(out_h, out_w)}")
    h, w = g.shape
    if (h, w) == (out_h, out_w):
        return g.copy()
    r0, r1, fr = _axis_weights(h, out_h)
    rows = g[r0, :] + fr[:, None] * (g[r1, :] - g[r0, :])
    c0, c1, fc = _axis_weights(w, out_w)
    out = rows[:, c0] + fc[None, :] * (rows[:, c1] - rows[:, c0])
    return np.clip(out, g.min(), g.max())


def scaled_shape(shape, factor: float) -> tuple[int, int]:
    if not factor > 0:
        raise InvalidParams(f"scale factor must be > 0, got {factor}")
    return max(1, int(round(shape[0] * factor))), max(1, int(round(shape[1] * factor)))


def rescale(g, factor: float) -> np.ndarray:
    g = as_grid(g)
    return resize_bilinear(g, *scaled_shape(g.shape, factor))
