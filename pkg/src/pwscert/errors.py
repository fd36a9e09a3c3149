"""Exception hierarchy shared across the package.

Every error carries a machine-readable ``kind`` so the CLI can emit
single-line ``kind: message`` diagnostics.
"""


class PwsError(Exception):
    """Base class for all package errors."""

    kind = "error"


class NonPositiveDepth(PwsError):
    """A point lies on or behind the camera plane somewhere in the motion range."""

    kind = "non_positive_depth"


class ShapeMismatch(PwsError):
    """Array shapes disagree (images, clouds, classifier inputs)."""

    kind = "shape_mismatch"


class DegenerateInterval(PwsError):
    """Partition bound collapsed below the analysis resolution."""

    kind = "degenerate_interval"


class NegativeMargin(PwsError):
    """One-frame projection span does not exceed twice the convexity slack."""

    kind = "negative_margin"


class InvalidDelta(PwsError):
    """Requested partition spacing is outside (0, 2b]."""

    kind = "invalid_delta"


class DegenerateDataset(PwsError):
    """Training data is unusable (missing labels, single class)."""

    kind = "degenerate_dataset"


class EmptyFrame(PwsError):
    """Reference render covers no pixel at all."""

    kind = "empty_frame"


class InvalidRange(PwsError):
    """Scene generation parameter outside its allowed range."""

    kind = "invalid_range"


class DomainError(PwsError):
    """Mathematical function evaluated outside its domain."""

    kind = "domain_error"


class ConfigError(PwsError):
    """Bad run configuration (CLI exits with status 2)."""

    kind = "config_error"
