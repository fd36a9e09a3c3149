"""Certified robustness against one-axis camera motion via pixel-wise
Gaussian smoothing over uniformly partitioned projected frames."""

from .certify import (
    AttackReport,
    CertificationReport,
    IntervalConfig,
    Verdict,
    certified_accuracy,
    certify,
    empirical_attack,
    frame_budget_comparison,
)
from .classifier import (
    BaseClassifier,
    LinearSoftmaxClassifier,
    SubprocessClassifier,
    builtin_train,
    load_model,
    save_model,
)
from .errors import (
    ConfigError,
    DegenerateDataset,
    DegenerateInterval,
    DomainError,
    EmptyFrame,
    InvalidDelta,
    InvalidRange,
    NegativeMargin,
    NonPositiveDepth,
    PwsError,
    ShapeMismatch,
)
from .geometry import (
    Axis,
    CameraModel,
    MotionSpec,
    MotionValue,
    PixelPosition,
    delta_constant,
    lipschitz_constant,
    lipschitz_constants,
    project,
    project_general,
    project_points,
    projection_derivative,
)
from .intervals import (
    CertMethod,
    ConsistentInterval,
    DeltaConvexity,
    PartitionPlan,
    build_partition,
    check_delta_convexity,
    consistent_intervals,
    exact_delta,
    lipschitz_delta,
    one_frame_delta,
)
from .rasterizer import (
    ColoredPointCloud,
    adjacent_frame_error,
    load_cloud,
    load_image,
    render,
    render_sweep,
    save_cloud,
    save_image,
)
from .scenes import (
    Scene,
    ShapeClass,
    coverage_fraction,
    extract_one_frame,
    generate_scene,
    load_corpus,
    save_corpus,
)
from .smoothing import (
    SmoothedEstimate,
    SmoothingConfig,
    clopper_pearson_lower,
    gaussian_quantile,
    smoothed_estimate,
    smoothed_prediction,
)

__version__ = "0.1.0"
