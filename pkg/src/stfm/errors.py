"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand extents are incompatible."""


class ConfigError(ValueError):
    """A configuration value is outside its allowed range."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite or exceeded the divergence threshold."""


class CheckpointError(ValueError):
    """Base class for unreadable checkpoint files."""


class CheckpointFormatError(CheckpointError):
    """Magic bytes or record layout are not a checkpoint."""


class CheckpointVersionError(CheckpointError):
    """Container version is not supported by this reader."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before the declared records were read."""


class CheckpointShapeError(CheckpointError):
    """A stored tensor does not match the expected parameter layout."""
