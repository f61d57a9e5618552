"""Exception hierarchy shared across the package."""


class LuminaError(Exception):
    """Base class for all package errors."""


class DimensionError(LuminaError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class GeometryError(LuminaError, ValueError):
    """Convolution geometry does not produce an integer output size."""


class ContractError(LuminaError, RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class DomainError(LuminaError, ValueError):
    """A function was evaluated outside its valid domain."""


class ConfigError(LuminaError, ValueError):
    """Invalid configuration value."""


class DataError(LuminaError):
    """Image or pair ingestion failed."""


class TrainingError(LuminaError, RuntimeError):
    """Training produced a non-finite loss or gradient."""


class CheckpointError(LuminaError):
    """Base class for checkpoint load failures."""


class MagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class ManifestError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass
