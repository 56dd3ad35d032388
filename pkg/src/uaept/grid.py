"""Grid and mask types plus the geometric weak-annotation operations.

Grids are plain 2-D ``float64`` arrays and binary masks are 2-D ``bool``
arrays.  Row 0 is the top of the image and all boxes are inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyMask, OutOfBounds, ShapeMismatch, ValueRange


class PointRC(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class ExtremePoints:
    top: PointRC
    bottom: PointRC
    left: PointRC
    right: PointRC

    def __post_init__(self):
        for name in ("top", "bottom", "left", "right"):
            p = getattr(self, name)
            object.__setattr__(self, name, PointRC(int(p[0]), int(p[1])))
        pts = self.points()
        if any(self.top.row > p.row for p in pts) or any(self.bottom.row < p.row for p in pts):
            raise ValueRange(f"top/bottom rows inconsistent with the other points: {self}")
        if any(self.left.col > p.col for p in pts) or any(self.right.col < p.col for p in pts):
            raise ValueRange(f"left/right cols inconsistent with the other points: {self}")

    def points(self) -> tuple[PointRC, PointRC, PointRC, PointRC]:
        return (self.top, self.bottom, self.left, self.right)

    def check_within(self, height: int, width: int) -> None:
        for p in self.points():
            if not (0 <= p.row < height and 0 <= p.col < width):
                raise OutOfBounds(f"point {tuple(p)} outside {height}x{width} grid")

    def to_json(self) -> dict:
        return {k: [getattr(self, k).row, getattr(self, k).col] for k in ("top", "bottom", "left", "right")}

    @classmethod
    def from_json(cls, obj: dict) -> "ExtremePoints":
        return cls(**{k: PointRC(*obj[k]) for k in ("top", "bottom", "left", "right")})


@dataclass(frozen=True)
class BoundingBox:
    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueRange(f"empty box {self}")

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1

    def contains(self, p: PointRC) -> bool:
        return self.row_min <= p[0] <= self.row_max and self.col_min <= p[1] <= self.col_max

    def within(self, height: int, width: int) -> bool:
        return self.row_min >= 0 and self.col_min >= 0 and self.row_max < height and self.col_max < width

    def dilate(self, margin: int, height: int, width: int) -> "BoundingBox":
        """Grow by ``margin`` pixels on every side, clipped to the image."""
        return BoundingBox(
            max(self.row_min - margin, 0),
            min(self.row_max + margin, height - 1),
            max(self.col_min - margin, 0),
            min(self.col_max + margin, width - 1),
        )

    def slices(self) -> tuple[slice, slice]:
        return slice(self.row_min, self.row_max + 1), slice(self.col_min, self.col_max + 1)


def as_grid(a, name: str = "grid") -> np.ndarray:
    g = np.asarray(a, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2-D array, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueRange(f"{name} contains non-finite values")
    return g


def as_mask(a, name: str = "mask") -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if m.dtype != bool:
        if not np.all((m == 0) | (m == 1)):
            raise ValueRange(f"{name} must be binary")
        m = m.astype(bool)
    return m


def as_probability(a, name: str = "p") -> np.ndarray:
    p = as_grid(a, name)
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueRange(f"{name} must lie in [0, 1]")
    return p


def check_same_shape(*arrays) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"shape mismatch: {sorted(shapes)}")


def extract_extreme_points(mask) -> ExtremePoints:
    """Topmost, bottommost, leftmost and rightmost foreground pixels.

    Ties along a flat extremal edge go to the smallest orthogonal
    coordinate, e.g. the topmost point is the leftmost pixel of the top row.
    """
    m = as_mask(mask)
    rows, cols = np.nonzero(m)  # row-major order: sorted by row, then col
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixel")
    r_min, r_max = rows.min(), rows.max()
    c_min, c_max = cols.min(), cols.max()
    top = PointRC(int(r_min), int(cols[rows == r_min].min()))
    bottom = PointRC(int(r_max), int(cols[rows == r_max].min()))
    left = PointRC(int(rows[cols == c_min].min()), int(c_min))
    right = PointRC(int(rows[cols == c_max].min()), int(c_max))
    return ExtremePoints(top, bottom, left, right)


def bbox_from_extreme_points(ep: ExtremePoints) -> BoundingBox:
    return BoundingBox(ep.top.row, ep.bottom.row, ep.left.col, ep.right.col)


def box_mask(box: BoundingBox, height: int, width: int) -> np.ndarray:
    if not box.within(height, width):
        raise OutOfBounds(f"{box} does not fit a {height}x{width} grid")
    m = np.zeros((height, width), dtype=bool)
    m[box.slices()] = True
    return m


def mask_to_box(p, mode: str = "product") -> np.ndarray:
    """Project a probability map onto its box envelope.

    ``mode="product"`` gives ``out[r, c] = max(p[r, :]) * max(p[:, c])``.
    It is exact on binary boxes and idempotent whenever ``max(p)`` is 0 or 1;
    for a soft map it shrinks by ``max(p) ** 2`` per application.
    ``mode="min"`` uses ``min`` instead of the product, which agrees on binary
    inputs and is idempotent for every input.
    """
    p = as_probability(p)
    rmax, cmax = p.max(axis=1), p.max(axis=0)
    if mode == "product":
        return np.outer(rmax, cmax)
    if mode == "min":
        return np.minimum.outer(rmax, cmax)
    raise ValueError(f"unknown mask_to_box mode {mode!r}")


def mask_to_box_vjp(p: np.ndarray, upstream: np.ndarray, mode: str = "product") -> np.ndarray:
    """Pull ``upstream`` (dL/d out) back through :func:`mask_to_box`.

    Gradient reaches the first argmax of every row and every column.
    """
    p = np.asarray(p, dtype=np.float64)
    rmax, cmax = p.max(axis=1), p.max(axis=0)
    if mode == "product":
        d_rmax = upstream @ cmax
        d_cmax = upstream.T @ rmax
    elif mode == "min":
        row_wins = rmax[:, None] <= cmax[None, :]
        d_rmax = np.where(row_wins, upstream, 0.0).sum(axis=1)
        d_cmax = np.where(row_wins, 0.0, upstream).sum(axis=0)
    else:
        raise ValueError(f"unknown mask_to_box mode {mode!r}")
    grad = np.zeros_like(p)
    h, w = p.shape
    np.add.at(grad, (np.arange(h), p.argmax(axis=1)), d_rmax)
    np.add.at(grad, (p.argmax(axis=0), np.arange(w)), d_cmax)
    return grad
