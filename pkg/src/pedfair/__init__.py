"""Fairness audit toolkit for pedestrian object detection.

Matches detector outputs to attributed ground truth, computes count- and
confidence-based metrics per demographic/weather group, and quantifies the
disparity between groups.
"""

from .corpus import (
    Corpus,
    DistanceBin,
    LoadError,
    curate_single_attribute,
    distance_bin,
    filter_lighting,
    load,
    save_corpus,
    save_detections,
    subsample_equal,
)
from .darkness import DEFAULT_FACTOR_LADDER, DarknessFactor, apply_darkness, darkness_sweep
from .fairness import (
    DisparityReport,
    GroupEvaluator,
    GroupReport,
    ParityResult,
    disparity_best,
    disparity_report,
    disparity_worst,
    evaluate_groups,
    parity_check,
    wasserstein2,
    wasserstein2_max,
)
from .matching import MatchResult, iou, match_at_thresholds, match_image
from .metrics import (
    MAR_LADDER,
    Counts,
    MetricBundle,
    afpc,
    atpc,
    average_precision,
    average_recall,
    bundle,
    mean_over_thresholds,
)
from .model import (
    BodySize,
    BoundingBox,
    Detection,
    Gender,
    GroundTruthAnnotation,
    GroupSpec,
    ImageRecord,
    Lighting,
    PersonAttributes,
    WeatherCondition,
    WeatherKind,
    group_membership,
)
from .synthgen import (
    DegradationConfig,
    GroupModifier,
    PedestrianType,
    Scenario,
    generate,
)

__version__ = "0.1.0"

__all__ = [
    "BodySize",
    "BoundingBox",
    "Corpus",
    "Counts",
    "DEFAULT_FACTOR_LADDER",
    "DarknessFactor",
    "DegradationConfig",
    "Detection",
    "DisparityReport",
    "DistanceBin",
    "Gender",
    "GroundTruthAnnotation",
    "GroupEvaluator",
    "GroupModifier",
    "GroupReport",
    "GroupSpec",
    "ImageRecord",
    "Lighting",
    "LoadError",
    "MAR_LADDER",
    "MatchResult",
    "MetricBundle",
    "ParityResult",
    "PedestrianType",
    "PersonAttributes",
    "Scenario",
    "WeatherCondition",
    "WeatherKind",
    "afpc",
    "apply_darkness",
    "atpc",
    "average_precision",
    "average_recall",
    "bundle",
    "curate_single_attribute",
    "darkness_sweep",
    "disparity_best",
    "disparity_report",
    "disparity_worst",
    "distance_bin",
    "evaluate_groups",
    "filter_lighting",
    "generate",
    "group_membership",
    "iou",
    "load",
    "match_at_thresholds",
    "match_image",
    "mean_over_thresholds",
    "parity_check",
    "save_corpus",
    "save_detections",
    "subsample_equal",
    "wasserstein2",
    "wasserstein2_max",
]
