"""Uncertainty-aware extreme-point tracing for weakly supervised segmentation."""

from .grid import (
    BoundingBox,
    ExtremePoints,
    PointRC,
    bbox_from_extreme_points,
    box_mask,
    extract_extreme_points,
    mask_to_box,
)
from .losses import (
    LossValue,
    LossWeights,
    bce_dice_loss,
    box_alignment_loss,
    pseudo_label_loss,
    total_loss,
    usc_loss,
)
from .metrics import aggregate, dice, iou, make_folds
from .phantom import PhantomSample, ShapeParams, SpeckleParams, generate_phantom, initial_pseudo_from_box
from .predictor import Predictor, StackPredictor, SyntheticPredictor, synthetic_predictor
from .refinement import (
    RefineConfig,
    RefinementLog,
    Sample,
    align_to_reference,
    refine_pseudo_label,
    run_refinement_loop,
    scale_pair,
)
from .tracing import CostMap, PixelPath, build_cost_map, edge_cost, min_cost_path, sobel_gradient, trace_pseudo_label
from .uncertainty import (
    binary_entropy_map,
    confidence_weights,
    ensemble_mean,
    ensemble_variance,
    minmax_normalize,
    pairwise_uncertainty,
)

__version__ = "0.1.0"
