"""Overlap metrics, fold splitting and cross-fold aggregation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InvalidParams, TooFewSamples
from .grid import as_mask, check_same_shape


def overlap_counts(a, b) -> tuple[int, int, int]:
    """(|a & b|, |a|, |b|) for two binary masks of equal shape."""
    a = as_mask(a, "a")
    b = as_mask(b, "b")
    check_same_shape(a, b)
    return int(np.count_nonzero(a & b)), int(np.count_nonzero(a)), int(np.count_nonzero(b))


def iou_fraction(a, b) -> Fraction:
    inter, na, nb = overlap_counts(a, b)
    union = na + nb - inter
    return Fraction(1) if union == 0 else Fraction(inter, union)


def dice_fraction(a, b) -> Fraction:
    inter, na, nb = overlap_counts(a, b)
    return Fraction(1) if na + nb == 0 else Fraction(2 * inter, na + nb)


def iou(a, b) -> float:
    """Intersection over union; two empty masks score 1.0."""
    return float(iou_fraction(a, b))


def dice(a, b) -> float:
    """Dice coefficient; two empty masks score 1.0."""
    return float(dice_fraction(a, b))


@dataclass
class FoldSplit:
    n_folds: int
    assignments: dict
    seed: int

    def fold_of(self, sample_id) -> int:
        return self.assignments[sample_id]

    def members(self, fold: int) -> list:
        return [k for k, v in self.assignments.items() if v == fold]

    def sizes(self) -> list[int]:
        counts = [0] * self.n_folds
        for f in self.assignments.values():
            counts[f] += 1
        return counts


def make_folds(ids, n_folds: int = 5, seed: int = 0) -> FoldSplit:
    """Seeded shuffle followed by round-robin fold assignment."""
    ids = list(ids)
    if n_folds < 2:
        raise InvalidParams(f"need at least 2 folds, got {n_folds}")
    if len(set(ids)) != len(ids):
        raise InvalidParams("sample ids must be unique")
    if len(ids) < n_folds:
        raise TooFewSamples(f"{len(ids)} samples cannot fill {n_folds} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    return FoldSplit(n_folds, {ids[j]: i % n_folds for i, j in enumerate(order)}, seed)


@dataclass
class MetricsReport:
    per_image: list[dict] = field(default_factory=list)
    per_fold: list[dict] = field(default_factory=list)
    overall: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"per_image": self.per_image, "per_fold": self.per_fold, "overall": self.overall}


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.min() == v.max():
        # summation rounding would otherwise leave a ~1e-17 spread
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std())


def aggregate(report_inputs) -> MetricsReport:
    """Average per image within each fold, then mean/std across fold means.

    ``report_inputs`` is an iterable of ``(fold, metrics)`` where ``metrics``
    is a list of dicts carrying ``id``, ``iou`` and ``dice``.  The standard
    deviation is the population formula over fold means.
    """
    by_fold = defaultdict(list)
    for fold, metrics in report_inputs:
        by_fold[fold].extend(metrics)
    if not by_fold:
        raise TooFewSamples("aggregate needs at least one fold")

    report = MetricsReport()
    for fold in sorted(by_fold):
        rows = sorted(by_fold[fold], key=lambda m: str(m["id"]))
        if not rows:
            raise TooFewSamples(f"fold {fold} has no images")
        for m in rows:
            report.per_image.append({"id": m["id"], "fold": fold, "iou": m["iou"], "dice": m["dice"]})
        report.per_fold.append(
            {
                "fold": fold,
                "n": len(rows),
                "iou_mean": float(np.mean([m["iou"] for m in rows])),
                "dice_mean": float(np.mean([m["dice"] for m in rows])),
            }
        )
    # sort fold means so the reduction does not depend on fold order
    for key in ("iou", "dice"):
        mean, std = _mean_std(sorted(f[f"{key}_mean"] for f in report.per_fold))
        report.overall[f"{key}_mean"] = mean
        report.overall[f"{key}_std"] = std
    report.overall["n_folds"] = len(report.per_fold)
    return report
