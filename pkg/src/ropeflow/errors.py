"""Exception types raised across the package.

Every error the library raises on purpose derives from RopeflowError so
callers can catch the whole family; each class additionally derives from
the matching builtin (ValueError / RuntimeError) to stay idiomatic.
"""


class RopeflowError(Exception):
    """Base class for all ropeflow errors."""


class InvalidDimensionError(RopeflowError, ValueError):
    """An encoding or head dimension that must be even/positive is not."""


class InvalidBaseError(RopeflowError, ValueError):
    """Frequency-progression base must be > 1."""


class NonFiniteInputError(RopeflowError, ValueError):
    """Input contains NaN or infinity."""


class ShapeError(RopeflowError, ValueError):
    """Array shapes do not agree with the operation's contract."""


class ConfigError(RopeflowError, ValueError):
    """Invalid or inconsistent configuration value."""


class EmptyDatasetError(RopeflowError, ValueError):
    """A dataset-level operation received no samples."""


class EmptyInputError(RopeflowError, ValueError):
    """A per-call operation received zero points."""


class DegenerateGeometryError(RopeflowError, ValueError):
    """Geometry has zero extent (cannot be normalized)."""


class DegenerateChannelError(RopeflowError, ValueError):
    """A target channel is (numerically) constant; Z-scoring is undefined."""


class BoundsError(RopeflowError, ValueError):
    """Requested count/index exceeds what is available."""


class DomainError(RopeflowError, ValueError):
    """Value outside the mathematical domain of the operation."""


class UndefinedMetricError(RopeflowError, ValueError):
    """Metric is undefined for this input (e.g. zero-norm ground truth)."""


class UsageError(RopeflowError, RuntimeError):
    """API called in the wrong order or mode (e.g. backward before forward)."""


class FormatError(RopeflowError, RuntimeError):
    """A binary file is corrupt or not in the expected format."""


class VersionError(FormatError):
    """File format version is not supported."""


class CheckpointMismatchError(RopeflowError, RuntimeError):
    """Checkpoint contents disagree with the requested model configuration."""


class NumericalAbortError(RopeflowError, RuntimeError):
    """A non-finite loss/gradient/parameter forced training to stop."""


class ResourceGuardError(RopeflowError, RuntimeError):
    """An analysis would exceed the configured desk-scale resource cap."""


class SuspiciousInputWarning(UserWarning):
    """Inputs look unnormalized (far outside the expected coordinate range)."""
