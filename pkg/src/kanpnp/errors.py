"""Exception hierarchy shared across the package."""


class KanPnPError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KanPnPError, ValueError):
    """Invalid parameter, schedule or configuration value."""


class ShapeError(KanPnPError, ValueError):
    """Array shapes do not agree with what an operation expects."""


class UsageError(KanPnPError, RuntimeError):
    """An API was called out of order, e.g. backward with a stale cache."""


class NumericalError(KanPnPError, ArithmeticError):
    """A computation produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UnsupportedFormatError(KanPnPError, ValueError):
    """Image file exists but its format is not handled (e.g. 16-bit PNG)."""
