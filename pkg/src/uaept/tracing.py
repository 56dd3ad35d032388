"""Gradient/uncertainty cost maps and minimum-cost contour tracing.

The refined pseudo label is built by joining the four extreme points with
minimum-cost 8-connected paths (top -> right -> bottom -> left -> top) and
filling the enclosed area.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidParams, OutOfBounds, TooSmall, Unreachable, ValueRange
from .grid import (
    BoundingBox,
    ExtremePoints,
    PointRC,
    as_grid,
    bbox_from_extreme_points,
    check_same_shape,
)

SQRT2 = math.sqrt(2.0)
DEFAULT_COST_EPS = 1e-6
DEFAULT_MARGIN = 2

# fixed neighbour order; predecessor choice on equal-cost routes depends on it
NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class CostMap:
    grid: np.ndarray
    alpha: float = 1.0
    eps: float = DEFAULT_COST_EPS

    def __post_init__(self):
        g = as_grid(self.grid, "cost")
        if np.any(g <= 0):
            raise ValueRange("cost map values must be strictly positive")
        object.__setattr__(self, "grid", g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass
class PixelPath:
    points: list[PointRC]
    total_cost: float = 0.0

    def __len__(self):
        return len(self.points)


def _as_cost_grid(cost) -> np.ndarray:
    if isinstance(cost, CostMap):
        return cost.grid
    return CostMap(cost).grid


def sobel_gradient(mu) -> np.ndarray:
    """Sobel gradient magnitude with replicate padding, unnormalised."""
    mu = as_grid(mu, "mu")
    if mu.shape[0] < 3 or mu.shape[1] < 3:
        raise TooSmall(f"sobel needs at least 3x3, got {mu.shape}")
    h, w = mu.shape
    m = np.pad(mu, 1, mode="edge")

    def win(dr, dc):
        return m[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]

    # outer taps are paired first so a rotated grid sums the same terms in
    # the same order, which keeps rotation equivariance exact
    gx = ((win(-1, 1) + win(1, 1)) + 2.0 * win(0, 1)) - ((win(-1, -1) + win(1, -1)) + 2.0 * win(0, -1))
    gy = ((win(1, -1) + win(1, 1)) + 2.0 * win(1, 0)) - ((win(-1, -1) + win(-1, 1)) + 2.0 * win(-1, 0))
    return np.sqrt(gx * gx + gy * gy)


def build_cost_map(G, U, alpha: float = 1.0, eps: float = DEFAULT_COST_EPS) -> CostMap:
    """``1 / (G + alpha * U + eps)`` per pixel."""
    G = as_grid(G, "G")
    U = as_grid(U, "U")
    check_same_shape(G, U)
    if np.any(G < 0):
        raise ValueRange("gradient magnitude must be non-negative")
    if U.min() < 0 or U.max() > 1:
        raise ValueRange("uncertainty map must lie in [0, 1]")
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise ValueRange(f"alpha must be finite and >= 0, got {alpha}")
    if not eps > 0:
        raise ValueRange(f"eps must be > 0, got {eps}")
    return CostMap(1.0 / (G + alpha * U + eps), alpha=alpha, eps=eps)


def edge_cost(cost_i: float, cost_j: float, diagonal: bool, geometric: bool = True) -> float:
    base = (cost_i + cost_j) / 2.0
    if geometric and diagonal:
        return base * SQRT2
    return base


def min_cost_path(
    cost,
    src,
    dst,
    search_box: BoundingBox | None = None,
    geometric: bool = True,
) -> PixelPath:
    """Dijkstra over the 8-connected pixel graph restricted to ``search_box``.

    Frontier ties pop the smaller ``(row, col)`` first and a predecessor is
    only replaced on strict improvement, so the returned path is reproducible.
    """
    grid = _as_cost_grid(cost)
    H, W = grid.shape
    box = search_box or BoundingBox(0, H - 1, 0, W - 1)
    if not box.within(H, W):
        raise OutOfBounds(f"search box {box} outside {H}x{W} grid")
    src, dst = PointRC(*map(int, src)), PointRC(*map(int, dst))
    for p in (src, dst):
        if not box.contains(p):
            raise OutOfBounds(f"{tuple(p)} outside search box {box}")
    if src == dst:
        return PixelPath([src], 0.0)

    r0, c0 = box.row_min, box.col_min
    h, w = box.height, box.width
    local = grid[box.slices()].ravel().tolist()
    n = h * w
    start = (src.row - r0) * w + (src.col - c0)
    goal = (dst.row - r0) * w + (dst.col - c0)

    # per-direction (offset, step length, drow, dcol)
    steps = [(dr * w + dc, SQRT2 if (geometric and dr and dc) else 1.0, dr, dc) for dr, dc in NEIGHBOURS]

    inf = math.inf
    dist = [inf] * n
    pred = [-1] * n
    done = [False] * n
    dist[start] = 0.0
    heap = [(0.0, start)]
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == goal:
            break
        ur, uc = divmod(u, w)
        cu = local[u]
        for off, length, dr, dc in steps:
            vr, vc = ur + dr, uc + dc
            if vr < 0 or vr >= h or vc < 0 or vc >= w:
                continue
            v = u + off
            if done[v]:
                continue
            nd = d + (cu + local[v]) / 2.0 * length
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                push(heap, (nd, v))
    if not done[goal]:
        raise Unreachable(f"{tuple(dst)} not reachable from {tuple(src)}")

    out = []
    u = goal
    while u != -1:
        r, c = divmod(u, w)
        out.append(PointRC(r + r0, c + c0))
        u = pred[u]
    out.reverse()
    return PixelPath(out, dist[goal])


def path_cost(cost, points, geometric: bool = True) -> float:
    """Sum of edge costs along ``points``, accumulated from the first point."""
    grid = _as_cost_grid(cost)
    total = 0.0
    for a, b in zip(points, points[1:]):
        dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
        if max(dr, dc) != 1:
            raise ValueRange(f"{tuple(a)} -> {tuple(b)} is not an 8-neighbour step")
        total += edge_cost(grid[a[0], a[1]], grid[b[0], b[1]], dr == 1 and dc == 1, geometric)
    return total


def _bridge_diagonals(fg: np.ndarray, crop: np.ndarray, paths, r0: int, c0: int) -> bool:
    """Add a corner pixel to every diagonal step that is not 4-connected.

    The cheaper corner is chosen.  Returns True if anything was added.
    """
    added = False
    for path in paths:
        for a, b in zip(path.points, path.points[1:]):
            if a.row == b.row or a.col == b.col:
                continue
            c1 = (a.row - r0, b.col - c0)
            c2 = (b.row - r0, a.col - c0)
            if fg[c1] or fg[c2]:
                continue
            fg[c1 if crop[c1] <= crop[c2] else c2] = True
            added = True
    return added


@dataclass
class TraceResult:
    mask: np.ndarray
    paths: list[PixelPath] = field(default_factory=list)
    search_box: BoundingBox | None = None


def trace_contour(
    cost,
    ep: ExtremePoints,
    margin: int = DEFAULT_MARGIN,
    geometric: bool = True,
) -> TraceResult:
    """Like :func:`trace_pseudo_label` but also returns the four paths."""
    grid = _as_cost_grid(cost)
    H, W = grid.shape
    ep.check_within(H, W)
    if margin < 0:
        raise InvalidParams(f"margin must be >= 0, got {margin}")
    box = bbox_from_extreme_points(ep).dilate(margin, H, W)
    mask = np.zeros((H, W), dtype=bool)

    order = (ep.top, ep.right, ep.bottom, ep.left, ep.top)
    paths = [min_cost_path(grid, a, b, box, geometric) for a, b in zip(order, order[1:])]

    r0, c0 = box.row_min, box.col_min
    crop = grid[box.slices()]
    fg = np.zeros(crop.shape, dtype=bool)
    for path in paths:
        for p in path.points:
            fg[p.row - r0, p.col - c0] = True
    # binary_fill_holes floods the complement 4-connectedly from the crop border
    fg = ndimage.binary_fill_holes(fg)
    if _bridge_diagonals(fg, crop, paths, r0, c0):
        fg = ndimage.binary_fill_holes(fg)
    mask[box.slices()] = fg
    return TraceResult(mask, paths, box)


def trace_pseudo_label(
    cost,
    ep: ExtremePoints,
    margin: int = DEFAULT_MARGIN,
    geometric: bool = True,
) -> np.ndarray:
    """Trace the closed contour through the extreme points and fill it.

    Paths are confined to the extreme-point box grown by ``margin``.  When the
    box is degenerate (all points on one row or column) there is no interior
    and the mask is just the path pixels.
    """
    return trace_contour(cost, ep, margin, geometric).mask


def largest_component(mask) -> np.ndarray:
    """Keep the largest 4-connected foreground component (first on ties)."""
    m = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(m)
    if n <= 1:
        return m.copy()
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def contour_pixels(mask) -> np.ndarray:
    """Foreground pixels with at least one 4-neighbour in the background."""
    m = np.asarray(mask, dtype=bool)
    return m & ~ndimage.binary_erosion(m, border_value=0)

