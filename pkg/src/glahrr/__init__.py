"""Heavy-rain removal: model, synthetic data, losses, and training tools."""

from glahrr.errors import (
    CheckpointError,
    CompositionError,
    ConfigurationError,
    DecodeError,
    DivergenceError,
    DomainError,
    EmptyDatasetError,
    GlahrrError,
    SingularityError,
    SizeError,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "CompositionError",
    "ConfigurationError",
    "DecodeError",
    "DivergenceError",
    "DomainError",
    "EmptyDatasetError",
    "GlahrrError",
    "SingularityError",
    "SizeError",
    "__version__",
]
