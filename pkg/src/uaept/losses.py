"""Training objectives over probability maps, with analytic gradients.

Every loss returns a :class:`LossValue` whose ``grads`` hold dL/dp for each
probability input, in argument order.  Gradients stop at the probability
maps; whatever produced them is out of scope here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams
from .grid import as_mask, as_probability, check_same_shape, mask_to_box, mask_to_box_vjp
from .uncertainty import DEFAULT_ENTROPY_EPS, binary_entropy_derivative, binary_entropy_map

BCE_CLAMP = 1e-7
DICE_SMOOTH = 1.0


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidParams(f"{name} must be finite and >= 0, got {v}")


@dataclass
class LossValue:
    value: float
    grads: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __float__(self):
        return self.value


def _bce_dice(p: np.ndarray, t: np.ndarray, smooth: float) -> tuple[float, np.ndarray]:
    n = p.size
    q = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    bce = -np.mean(t * np.log(q) + (1.0 - t) * np.log(1.0 - q))
    d_bce = (-t / q + (1.0 - t) / (1.0 - q)) / n
    d_bce = np.where((p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP), d_bce, 0.0)

    inter = float(np.sum(p * t))
    denom = float(np.sum(p) + np.sum(t)) + smooth
    dice = (2.0 * inter + smooth) / denom
    d_dice = (2.0 * t * denom - (2.0 * inter + smooth)) / denom**2
    return float(bce) + (1.0 - dice), d_bce - d_dice


def bce_dice_loss(p, target, smooth: float = DICE_SMOOTH) -> LossValue:
    """Mean binary cross entropy plus soft-Dice loss.

    ``p`` is clamped to ``[1e-7, 1 - 1e-7]`` inside the BCE term only.
    """
    p = as_probability(p)
    t = as_mask(target, "target").astype(np.float64)
    check_same_shape(p, t)
    value, grad = _bce_dice(p, t, smooth)
    return LossValue(value, (grad,))


def usc_loss(p1, p2, eps: float = DEFAULT_ENTROPY_EPS, mode: str = "detached") -> LossValue:
    """Entropy-weighted squared disagreement between two predictions.

    ``mode="detached"`` treats the confidence weights as constants when
    differentiating; ``mode="full"`` also differentiates through them.
    The value is the same in both modes.
    """
    if mode not in ("detached", "full"):
        raise InvalidParams(f"unknown usc mode {mode!r}")
    p1 = as_probability(p1, "p1")
    p2 = as_probability(p2, "p2")
    check_same_shape(p1, p2)
    n = p1.size
    u = (binary_entropy_map(p1, eps) + binary_entropy_map(p2, eps)) / 2.0
    w = np.exp(-u)
    d = p1 - p2
    value = float(np.sum(w * d * d) / n)

    g1 = 2.0 * w * d / n
    g2 = -g1
    if mode == "full":
        # dW/dp_k = -W * H'(p_k) / 2
        dw_common = -(w * d * d) / (2.0 * n)
        g1 = g1 + dw_common * binary_entropy_derivative(p1, eps)
        g2 = g2 + dw_common * binary_entropy_derivative(p2, eps)
    return LossValue(value, (g1, g2))


def box_alignment_loss(p1, p2, gt_box, box_mode: str = "product") -> LossValue:
    """BCE+Dice between the box projections of both predictions and the box.

    The BCE of the stacked pair equals the mean of the per-pair BCE terms;
    Dice is taken per pair and averaged.
    """
    p1 = as_probability(p1, "p1")
    p2 = as_probability(p2, "p2")
    t = as_mask(gt_box, "gt_box").astype(np.float64)
    check_same_shape(p1, p2, t)
    v1, up1 = _bce_dice(mask_to_box(p1, box_mode), t, DICE_SMOOTH)
    v2, up2 = _bce_dice(mask_to_box(p2, box_mode), t, DICE_SMOOTH)
    g1 = mask_to_box_vjp(p1, up1 / 2.0, box_mode)
    g2 = mask_to_box_vjp(p2, up2 / 2.0, box_mode)
    return LossValue((v1 + v2) / 2.0, (g1, g2))


def pseudo_label_loss(p1, p2, pseudo) -> LossValue:
    a = bce_dice_loss(p1, pseudo)
    b = bce_dice_loss(p2, pseudo)
    return LossValue((a.value + b.value) / 2.0, (a.grads[0] / 2.0, b.grads[0] / 2.0))


def total_loss(boxalign: float, usc: float, pl: float, w: LossWeights = LossWeights()) -> float:
    return float(boxalign) + w.lambda1 * float(usc) + w.lambda2 * float(pl)
