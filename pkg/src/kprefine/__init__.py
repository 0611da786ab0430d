"""kprefine: detector-agnostic keypoint refinement and scoring.

Keypoints pooled from affine-warped views of an image are clustered with an
outlier-robust Gaussian mixture fit; each surviving component is a refined
keypoint carrying two interpretable scores, robustness (how many warps
re-detected it) and deviation (its localization spread in pixels).
"""

from ._backend import BACKEND_NAME
from .detect import DetectorConfig, load_external_keypoints, select_top_n
from .geometry import (AffineTransform, AugmentationSet, WarpConfig,
                       apply_point, build_augmentation_set, invert)
from .gmm import (GmmConfig, MixtureComponent, RefinedKeypoint, fit,
                  rank_refined, score_components)
from .kde import DensityGrid, KdeConfig, evaluate_grid, find_local_maxima
from .keypoints import Keypoint
from .pipeline import PipelineConfig, load_config, refine_image

__version__ = "0.1.0"

__all__ = [
    "AffineTransform", "AugmentationSet", "BACKEND_NAME", "DensityGrid",
    "DetectorConfig", "GmmConfig", "KdeConfig", "Keypoint",
    "MixtureComponent", "PipelineConfig", "RefinedKeypoint", "WarpConfig",
    "apply_point", "build_augmentation_set", "evaluate_grid",
    "find_local_maxima", "fit", "invert", "load_config",
    "load_external_keypoints", "rank_refined", "refine_image",
    "score_components", "select_top_n",
]
