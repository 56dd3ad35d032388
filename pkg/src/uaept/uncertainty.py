"""Monte-Carlo ensemble statistics and entropy-based confidence weights."""

from __future__ import annotations

import numpy as np

from .errors import InvalidParams, NegativeUncertainty, ShapeMismatch, ValueRange
from .grid import as_grid, as_probability, check_same_shape

DEFAULT_ENTROPY_EPS = 1e-12


def as_stack(a) -> np.ndarray:
    """Validate a ``(T, H, W)`` stack of stochastic predictions."""
    s = np.asarray(a, dtype=np.float64)
    if s.ndim != 3 or min(s.shape[1:]) < 1:
        raise ShapeMismatch(f"feature stack must be (T, H, W), got {s.shape}")
    if s.shape[0] < 2:
        raise InvalidParams(f"feature stack needs T >= 2 passes, got {s.shape[0]}")
    if not np.all(np.isfinite(s)):
        raise ValueRange("feature stack contains non-finite values")
    return s


def _sorted_layers(stack) -> np.ndarray:
    # reduction order independent of layer order, so results are exactly
    # permutation invariant
    return np.sort(as_stack(stack), axis=0)


def _mean(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = s[0] == s[-1]
    # T identical values need not sum/divide back to themselves exactly
    return np.where(flat, s[0], s.sum(axis=0) / s.shape[0]), flat


def ensemble_mean(stack) -> np.ndarray:
    return _mean(_sorted_layers(stack))[0]


def ensemble_variance(stack) -> np.ndarray:
    """Population variance (divide by T) over the stochastic passes."""
    s = _sorted_layers(stack)
    mu, flat = _mean(s)
    var = ((s - mu) ** 2).sum(axis=0) / s.shape[0]
    return np.where(flat, 0.0, var)


def minmax_normalize(g) -> np.ndarray:
    """Affine rescale to [0, 1]; a constant grid maps to all zeros."""
    g = as_grid(g)
    lo, hi = g.min(), g.max()
    if hi == lo:
        return np.zeros_like(g)
    return np.clip((g - lo) / (hi - lo), 0.0, 1.0)


def _canonical_pair(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # (1 - hi) is exact for hi >= 0.5, so p and 1 - p map to the same pair and
    # the entropy is bitwise symmetric
    hi = np.where(p >= 0.5, p, 1.0 - p)
    return 1.0 - hi, hi


def binary_entropy_map(p, eps: float = DEFAULT_ENTROPY_EPS) -> np.ndarray:
    """Per-pixel binary entropy (natural log) with stabilising ``eps``."""
    if eps <= 0:
        raise InvalidParams("eps must be positive")
    p = as_probability(p)
    lo, hi = _canonical_pair(p)
    return -(lo * np.log(lo + eps) + hi * np.log(hi + eps))


def binary_entropy_derivative(p, eps: float = DEFAULT_ENTROPY_EPS) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    q = 1.0 - p
    return -(np.log(p + eps) + p / (p + eps) - np.log(q + eps) - q / (q + eps))


def pairwise_uncertainty(p1, p2, eps: float = DEFAULT_ENTROPY_EPS) -> np.ndarray:
    p1 = as_probability(p1, "p1")
    p2 = as_probability(p2, "p2")
    check_same_shape(p1, p2)
    return (binary_entropy_map(p1, eps) + binary_entropy_map(p2, eps)) / 2.0


def confidence_weights(uncertainty) -> np.ndarray:
    u = as_grid(uncertainty, "uncertainty")
    if np.any(u < 0):
        raise NegativeUncertainty("uncertainty must be non-negative")
    return np.exp(-u)
