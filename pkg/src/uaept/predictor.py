"""Predictor interface and the scripted stand-in used for desk-scale runs."""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .errors import InvalidParams
from .grid import as_grid, as_mask
from .resample import resize_bilinear


@runtime_checkable
class Predictor(Protocol):
    def predict_stochastic(self, image: np.ndarray, T: int, seed) -> np.ndarray:
        """``(T, H, W)`` stochastic passes; deterministic for a given seed."""

    def predict(self, image: np.ndarray) -> np.ndarray:
        """``(H, W)`` probability map."""


def signed_distance_band(gt, band: float = 6.0) -> np.ndarray:
    """Signed pixel distance to the lesion edge, clipped to ``[-band, band]``.

    Positive inside.  The lesion's own edge pixels sit at 0, so the steepest
    part of any monotone profile of this map lies on the true boundary.
    """
    gt = as_mask(gt, "gt")
    inside = ndimage.distance_transform_edt(gt) - 1.0
    outside = ndimage.distance_transform_edt(~gt)
    sd = np.where(gt, inside, -outside)
    return np.clip(sd, -band, band)


class SyntheticPredictor:
    """Sigmoid of a signed distance map, softened and optionally noisy.

    The stochastic passes add Gaussian noise of std ``noise_sigma`` to the
    logits before the sigmoid, so variance concentrates where the logit is
    near zero, i.e. at the lesion boundary.  ``sharpness_ramp`` raises the
    sharpness by that amount per epoch once :meth:`set_epoch` is called.
    """

    def __init__(self, gt, sharpness: float = 4.0, noise_sigma: float = 0.0, sharpness_ramp: float = 0.0):
        if sharpness < 0 or noise_sigma < 0:
            raise InvalidParams("sharpness and noise_sigma must be >= 0")
        self.gt = as_mask(gt, "gt")
        self.base_sharpness = float(sharpness)
        self.noise_sigma = float(noise_sigma)
        self.sharpness_ramp = float(sharpness_ramp)
        self.sharpness = self.base_sharpness
        self._sd = signed_distance_band(self.gt)

    def set_epoch(self, epoch: int) -> None:
        self.sharpness = self.base_sharpness + self.sharpness_ramp * epoch

    def _render(self, logits: np.ndarray, shape) -> np.ndarray:
        p = expit(logits)
        p = ndimage.gaussian_filter(p, sigma=1.0 / max(self.sharpness, 1.0), mode="nearest")
        if p.shape != tuple(shape):
            p = resize_bilinear(p, *shape)
        return np.clip(p, 0.0, 1.0)

    def predict(self, image) -> np.ndarray:
        image = as_grid(image, "image")
        return self._render(self.sharpness * self._sd, image.shape)

    def predict_stochastic(self, image, T: int, seed) -> np.ndarray:
        image = as_grid(image, "image")
        rng = np.random.default_rng(seed)
        logits = self.sharpness * self._sd
        layers = []
        for _ in range(T):
            noise = rng.standard_normal(logits.shape) * self.noise_sigma
            layers.append(self._render(logits + noise, image.shape))
        return np.stack(layers)


def synthetic_predictor(gt, sharpness: float, noise_sigma: float, sharpness_ramp: float = 0.0) -> SyntheticPredictor:
    return SyntheticPredictor(gt, sharpness, noise_sigma, sharpness_ramp)


class StackPredictor:
    """Replays a precomputed Monte-Carlo stack, e.g. exported from a network.

    ``predict`` returns the stack mean, resampled to the requested image size.
    """

    def __init__(self, stack):
        s = np.asarray(stack, dtype=np.float64)
        if s.ndim != 3:
            raise InvalidParams(f"stack must be (T, H, W), got {s.shape}")
        self.stack = s

    def predict(self, image) -> np.ndarray:
        image = as_grid(image, "image")
        return np.clip(resize_bilinear(self.stack.mean(axis=0), *image.shape), 0.0, 1.0)

    def predict_stochastic(self, image, T: int, seed) -> np.ndarray:
        if T > self.stack.shape[0]:
            raise InvalidParams(f"stack holds {self.stack.shape[0]} passes, {T} requested")
        return self.stack[:T].copy()
