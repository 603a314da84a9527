"""Exception types shared across the package."""


class AspectRecError(Exception):
    """Base class for all package errors."""


class InputError(AspectRecError):
    """Raised when an input stream or file cannot be read or parsed."""


class ConfigError(AspectRecError):
    """Raised for invalid or missing configuration values."""


class GraphConstructionError(AspectRecError):
    """Raised when the knowledge graph cannot be built from its inputs."""


class CheckpointError(AspectRecError):
    """Raised for unreadable, incompatible, or mis-shaped checkpoints."""
