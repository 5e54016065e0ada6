"""Exception types shared across the package."""


class LightFieldError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(LightFieldError, ValueError):
    """Raised when optical, sampling or grid parameters are inconsistent."""

    exit_code = 3


class SamplingError(ConfigurationError):
    """Raised when a grid violates the spectral-propagation sampling bound."""

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class NumericalError(LightFieldError, ArithmeticError):
    """Raised when a computation produces non-finite values."""

    exit_code = 5


class KeyFormatError(LightFieldError, OSError):
    """Raised when a key or data file cannot be parsed."""

    exit_code = 4
