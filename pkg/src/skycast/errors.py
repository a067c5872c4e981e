"""Exception types shared across the package."""


class SkycastError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SkycastError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class DomainError(SkycastError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigError(SkycastError, ValueError):
    """A configuration is invalid or inconsistent."""


class DataError(SkycastError, RuntimeError):
    """A data file is missing, malformed beyond tolerance, or unreadable."""


class DecodeError(DataError):
    """An image file could not be decoded."""

    def __init__(self, path, message="could not decode image"):
        super().__init__(f"{message}: {path}")
        self.path = path


class MetricError(SkycastError, ValueError):
    """A metric is undefined on the given slice (e.g. zero mean truth)."""


class FitError(SkycastError, ValueError):
    """A regression fit is underdetermined."""


class NumericError(SkycastError, ArithmeticError):
    """A numeric failure (NaN loss or gradient) aborted a training step."""
