"""Synthetic ultrasound-like phantoms with a known lesion mask."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidParams
from .grid import ExtremePoints, bbox_from_extreme_points, box_mask, extract_extreme_points
from .tracing import largest_component


@dataclass(frozen=True)
class ShapeParams:
    """Lesion geometry: a rotated ellipse with a harmonically perturbed radius.

    ``axes`` are the (row, col) semi-axes in pixels before rotation;
    ``perturbation`` is the relative radius amplitude (0 gives a clean ellipse)
    and ``softness`` the Gaussian edge blur in pixels.
    """

    axes: tuple[float, float] = (12.0, 16.0)
    center: tuple[float, float] | None = None
    angle: float = 0.0
    perturbation: float = 0.0
    harmonics: int = 3
    softness: float = 0.0
    lesion_level: float = 0.2
    background_level: float = 0.6


@dataclass(frozen=True)
class SpeckleParams:
    """Multiplicative unit-mean gamma speckle with the given variance."""

    variance: float = 0.0


@dataclass
class PhantomSample:
    image: np.ndarray
    gt: np.ndarray
    ep: ExtremePoints
    params: dict = field(default_factory=dict)


def _validate(height, width, shape: ShapeParams, speckle: SpeckleParams):
    if height < 32 or width < 32:
        raise InvalidParams(f"phantom must be at least 32x32, got {height}x{width}")
    a, b = shape.axes
    if a <= 0 or b <= 0:
        raise InvalidParams(f"axes must be positive, got {shape.axes}")
    if not 0 <= shape.perturbation < 0.5:
        raise InvalidParams("perturbation must lie in [0, 0.5)")
    if shape.softness < 0 or speckle.variance < 0:
        raise InvalidParams("softness and speckle variance must be >= 0")
    cr, cc = shape.center if shape.center is not None else ((height - 1) / 2, (width - 1) / 2)
    reach = max(a, b) * (1 + shape.perturbation)
    if cr - reach < 0 or cc - reach < 0 or cr + reach > height - 1 or cc + reach > width - 1:
        raise InvalidParams("lesion does not fit inside the image")
    return cr, cc


def generate_phantom(
    height: int = 64,
    width: int = 64,
    shape: ShapeParams = ShapeParams(),
    speckle: SpeckleParams = SpeckleParams(),
    seed=0,
) -> PhantomSample:
    cr, cc = _validate(height, width, shape, speckle)
    rng = np.random.default_rng(seed)
    a, b = shape.axes

    rr, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    dy, dx = rr - cr, cols - cc
    ca, sa = math.cos(shape.angle), math.sin(shape.angle)
    y = ca * dy + sa * dx
    x = -sa * dy + ca * dx
    rho = np.hypot(y / a, x / b)
    theta = np.arctan2(y / a, x / b)

    radius = np.ones_like(rho)
    if shape.perturbation > 0 and shape.harmonics > 0:
        ks = np.arange(2, shape.harmonics + 2)
        amps = rng.uniform(0.5, 1.0, size=ks.size) / ks
        amps *= shape.perturbation / amps.sum()
        phases = rng.uniform(0, 2 * math.pi, size=ks.size)
        for k, amp, ph in zip(ks, amps, phases):
            radius += amp * np.cos(k * theta + ph)
    gt = largest_component(rho <= radius)

    level = gt.astype(np.float64)
    if shape.softness > 0:
        level = ndimage.gaussian_filter(level, shape.softness, mode="nearest")
    image = shape.background_level + (shape.lesion_level - shape.background_level) * level
    if speckle.variance > 0:
        k = 1.0 / speckle.variance
        image = image * rng.gamma(k, 1.0 / k, size=image.shape)

    params = {"height": height, "width": width, "shape": asdict(shape), "speckle": asdict(speckle), "seed": seed}
    return PhantomSample(image, gt, extract_extreme_points(gt), params)


def random_shape_params(rng, height: int = 64, width: int = 64, **overrides) -> ShapeParams:
    """Draw a lesion that fits comfortably inside the image."""
    rng = np.random.default_rng(rng)
    side = min(height, width)
    a = rng.uniform(0.14, 0.26) * side
    b = rng.uniform(0.14, 0.26) * side
    pert = rng.uniform(0.0, 0.12)
    reach = max(a, b) * (1 + pert) + 2
    cr = rng.uniform(reach, height - 1 - reach)
    cc = rng.uniform(reach, width - 1 - reach)
    kw = dict(axes=(a, b), center=(cr, cc), angle=rng.uniform(0, math.pi), perturbation=pert)
    kw.update(overrides)
    return ShapeParams(**kw)


def initial_pseudo_from_box(ep: ExtremePoints, height: int, width: int, mode: str = "box-fill") -> np.ndarray:
    """Stand-in initial pseudo label built from the extreme-point box.

    ``box-fill`` fills the box; ``inscribed-ellipse`` keeps pixels whose
    centres fall inside the largest axis-aligned ellipse that fits the box.
    """
    box = bbox_from_extreme_points(ep)
    if mode == "box-fill":
        return box_mask(box, height, width)
    if mode != "inscribed-ellipse":
        raise InvalidParams(f"unknown initialiser {mode!r}")
    ep.check_within(height, width)
    rc = (box.row_min + box.row_max) / 2
    cc = (box.col_min + box.col_max) / 2
    hr, hc = box.height / 2, box.width / 2
    rr, cols = np.mgrid[0:height, 0:width]
    return ((rr - rc) / hr) ** 2 + ((cols - cc) / hc) ** 2 <= 1.0
