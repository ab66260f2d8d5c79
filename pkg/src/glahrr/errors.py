"""Exception types shared across the package."""


class GlahrrError(Exception):
    """Base class for all package-specific errors."""


class DecodeError(GlahrrError):
    """Raised when an image file cannot be decoded into an RGB array."""


class SizeError(GlahrrError):
    """Raised when an array shape violates a size requirement."""


class EmptyDatasetError(GlahrrError):
    """Raised when a dataset with zero pairs is iterated or trained on."""


class CompositionError(GlahrrError):
    """Raised when rain-scene components cannot be composed."""


class SingularityError(GlahrrError):
    """Raised when inverting a composition would divide by a near-zero term."""


class DomainError(GlahrrError):
    """Raised when tensor values fall outside the expected numeric domain."""


class ConfigurationError(GlahrrError):
    """Raised when a config or module is constructed with invalid settings."""


class DivergenceError(GlahrrError):
    """Raised when training produces a non-finite loss."""


class CheckpointError(GlahrrError):
    """Raised when a checkpoint file is malformed or inconsistent."""
