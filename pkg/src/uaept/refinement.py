"""Scale-pair construction, uncertainty-guided pseudo-label refinement and the K-epoch loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidParams, PredictorShapeMismatch
from .grid import ExtremePoints, as_grid, as_mask, bbox_from_extreme_points, box_mask
from .losses import LossWeights, box_alignment_loss, pseudo_label_loss, total_loss, usc_loss
from .metrics import iou
from .resample import resize_bilinear, scaled_shape
from .tracing import DEFAULT_COST_EPS, CostMap, build_cost_map, sobel_gradient, trace_pseudo_label
from .uncertainty import DEFAULT_ENTROPY_EPS, as_stack, ensemble_mean, ensemble_variance, minmax_normalize

log = logging.getLogger(__name__)


@dataclass
class RefineConfig:
    T: int = 20
    K: int = 100
    alpha: float = 1.0
    eps_cost: float = DEFAULT_COST_EPS
    eps_entropy: float = DEFAULT_ENTROPY_EPS
    margin: int = 2
    scale_set: tuple[float, ...] = (0.75, 1.0, 1.25)
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    max_epochs: int = 300
    geometric: bool = True
    usc_mode: str = "detached"

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.scale_set = tuple(float(s) for s in self.scale_set)
        if self.T < 2:
            raise InvalidParams(f"T must be >= 2, got {self.T}")
        if self.K < 1:
            raise InvalidParams(f"K must be >= 1, got {self.K}")
        if self.max_epochs < 1:
            raise InvalidParams(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.margin < 0:
            raise InvalidParams(f"margin must be >= 0, got {self.margin}")
        if len(self.scale_set) < 2 or any(s <= 0 for s in self.scale_set):
            raise InvalidParams(f"scale_set needs >= 2 positive factors, got {self.scale_set}")
        if self.alpha < 0 or self.eps_cost <= 0 or self.eps_entropy <= 0:
            raise InvalidParams("alpha must be >= 0 and both eps > 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidParams("seed must be an unsigned 64-bit integer")
        if self.usc_mode not in ("detached", "full"):
            raise InvalidParams(f"unknown usc_mode {self.usc_mode!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "RefineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParams(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_set"] = list(self.scale_set)
        return d

    def refresh_epochs(self) -> list[int]:
        return list(range(self.K, self.max_epochs + 1, self.K))


def scale_pair(image, scale_set, seed):
    """Two rescaled copies of ``image`` at distinct draws from ``scale_set``.

    Returns ``(x1, x2, (f1, f2))``.
    """
    image = as_grid(image, "image")
    scale_set = list(scale_set)
    if len(scale_set) < 2:
        raise InvalidParams("scale_set needs at least two factors")
    rng = np.random.default_rng(seed)
    i, j = rng.choice(len(scale_set), size=2, replace=False)
    f1, f2 = float(scale_set[i]), float(scale_set[j])
    x1 = resize_bilinear(image, *scaled_shape(image.shape, f1))
    x2 = resize_bilinear(image, *scaled_shape(image.shape, f2))
    return x1, x2, (f1, f2)


def align_to_reference(p, target_h: int, target_w: int) -> np.ndarray:
    return resize_bilinear(p, target_h, target_w)


def uncertainty_cost_map(stack, alpha: float = 1.0, eps: float = DEFAULT_COST_EPS) -> CostMap:
    """Cost map from an MC stack: Sobel of the mean plus normalised variance."""
    stack = as_stack(stack)
    G = sobel_gradient(ensemble_mean(stack))
    U = minmax_normalize(ensemble_variance(stack))
    return build_cost_map(G, U, alpha, eps)


def refine_pseudo_label(stack, ep: ExtremePoints, cfg: RefineConfig = RefineConfig()) -> np.ndarray:
    cost = uncertainty_cost_map(stack, cfg.alpha, cfg.eps_cost)
    return trace_pseudo_label(cost, ep, cfg.margin, cfg.geometric)


@dataclass
class Sample:
    image: np.ndarray
    ep: ExtremePoints
    pseudo: np.ndarray
    gt: np.ndarray | None = None
    id: str | None = None


@dataclass
class RefinementLog:
    """Per-epoch loss terms and per-refresh pseudo labels.

    ``epochs`` rows carry ``epoch, sample, boxalign, usc, pl, total``;
    ``refreshes`` rows carry ``epoch, sample`` and ``iou`` when a ground
    truth was supplied.  ``labels[(sample, epoch)]`` holds each refreshed
    mask, with epoch 0 the initial label.
    """

    epochs: list[dict] = field(default_factory=list)
    refreshes: list[dict] = field(default_factory=list)
    labels: dict = field(default_factory=dict)
    ids: list = field(default_factory=list)

    def final_labels(self) -> list[np.ndarray]:
        out = []
        for i in range(len(self.ids)):
            last = max(e for (s, e) in self.labels if s == i)
            out.append(self.labels[(i, last)])
        return out

    def iou_table(self) -> dict[int, list[float]]:
        """``{epoch: [iou per sample]}`` including epoch 0, phantom mode only."""
        table: dict[int, list[float]] = {}
        for r in self.refreshes:
            if "iou" in r:
                table.setdefault(r["epoch"], []).append(r["iou"])
        return table

    def to_json(self) -> dict:
        return {"ids": list(self.ids), "epochs": self.epochs, "refreshes": self.refreshes}


def _check_prediction(p, shape, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != tuple(shape):
        raise PredictorShapeMismatch(f"{what}: predictor returned {p.shape}, expected {tuple(shape)}")
    return p


def run_refinement_loop(samples, predictor, cfg: RefineConfig = RefineConfig()) -> RefinementLog:
    """Compute losses every epoch and refresh pseudo labels every K epochs.

    ``predictor`` is either one predictor shared by all samples or a list
    holding one predictor per sample.  A predictor may expose
    ``set_epoch(epoch)``, which is called before each epoch.  No parameters
    are updated here; training belongs to whoever owns the predictor.
    """
    samples = list(samples)
    if not samples:
        raise InvalidParams("run_refinement_loop needs at least one sample")
    predictors = list(predictor) if isinstance(predictor, (list, tuple)) else [predictor] * len(samples)
    if len(predictors) != len(samples):
        raise InvalidParams("need one predictor per sample")

    result = RefinementLog(ids=[s.id if s.id is not None else str(i) for i, s in enumerate(samples)])
    pseudo = []
    for i, s in enumerate(samples):
        img = as_grid(s.image, "image")
        s.ep.check_within(*img.shape)
        label = as_mask(s.pseudo, "pseudo")
        if label.shape != img.shape:
            raise InvalidParams(f"sample {i}: pseudo label shape {label.shape} != image {img.shape}")
        pseudo.append(label)
        result.labels[(i, 0)] = label
        row = {"epoch": 0, "sample": i}
        if s.gt is not None:
            row["iou"] = iou(label, s.gt)
        result.refreshes.append(row)

    gt_boxes = [box_mask(bbox_from_extreme_points(s.ep), *s.image.shape) for s in samples]
    for epoch in range(1, cfg.max_epochs + 1):
        for pred in {id(p): p for p in predictors}.values():
            if hasattr(pred, "set_epoch"):
                pred.set_epoch(epoch)
        refresh = epoch % cfg.K == 0
        for i, s in enumerate(samples):
            h, w = s.image.shape
            pred = predictors[i]
            x1, x2, _ = scale_pair(s.image, cfg.scale_set, [cfg.seed, epoch, i, 0])
            p1 = align_to_reference(_check_prediction(pred.predict(x1), x1.shape, "predict"), h, w)
            p2 = align_to_reference(_check_prediction(pred.predict(x2), x2.shape, "predict"), h, w)
            la = box_alignment_loss(p1, p2, gt_boxes[i]).value
            lu = usc_loss(p1, p2, cfg.eps_entropy, cfg.usc_mode).value
            lp = pseudo_label_loss(p1, p2, pseudo[i]).value
            result.epochs.append(
                {
                    "epoch": epoch,
                    "sample": i,
                    "boxalign": la,
                    "usc": lu,
                    "pl": lp,
                    "total": total_loss(la, lu, lp, cfg.weights),
                }
            )
            if refresh:
                stack = pred.predict_stochastic(s.image, cfg.T, [cfg.seed, epoch, i, 1])
                stack = np.asarray(stack, dtype=np.float64)
                if stack.shape != (cfg.T, h, w):
                    raise PredictorShapeMismatch(f"predict_stochastic returned {stack.shape}, expected {(cfg.T, h, w)}")
                pseudo[i] = refine_pseudo_label(stack, s.ep, cfg)
                result.labels[(i, epoch)] = pseudo[i]
                row = {"epoch": epoch, "sample": i}
                if s.gt is not None:
                    row["iou"] = iou(pseudo[i], s.gt)
                result.refreshes.append(row)
        if refresh:
            log.debug("epoch %d: refreshed %d pseudo labels", epoch, len(samples))
    return result
