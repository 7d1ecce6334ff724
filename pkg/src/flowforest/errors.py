"""Exception types shared across the package."""


class FlowForestError(ValueError):
    """Base class for errors raised by this package."""


class DataError(FlowForestError):
    """Raised for malformed or unusable input data (CSV contents, labels, shapes)."""


class ConfigError(FlowForestError):
    """Raised for invalid configuration values."""


class ModelFormatError(FlowForestError):
    """Raised when a model file is missing, truncated, corrupt, or incompatible."""
