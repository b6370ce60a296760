"""Image synthesis by multi-resolution gradient ascent on image encoders."""

__version__ = "0.1.0"

from das.augment import AugmentConfig, sample_views, scatter_adjoint
from das.encoders import Target, TargetSet, ToyEncoder, cosine_score, weighted_objective
from das.optimizer import RunConfig, RunTrace, das_optimize, das_step, pixel_ascent
from das.pyramid import PyramidImage, compose, compose_linear, decompose, new_pyramid

__all__ = [
    "AugmentConfig",
    "PyramidImage",
    "RunConfig",
    "RunTrace",
    "Target",
    "TargetSet",
    "ToyEncoder",
    "compose",
    "compose_linear",
    "cosine_score",
    "das_optimize",
    "das_step",
    "decompose",
    "new_pyramid",
    "pixel_ascent",
    "sample_views",
    "scatter_adjoint",
    "weighted_objective",
]
