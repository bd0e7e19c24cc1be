"""Exception types shared across the package."""


class LCMFlowError(Exception):
    """Base class for package errors."""


class DimensionError(LCMFlowError, ValueError):
    """Arrays or images with incompatible or too-small dimensions."""


class FormatError(LCMFlowError, ValueError):
    """Malformed input file or unsupported raster layout."""


class ConfigurationError(LCMFlowError, ValueError):
    """Parameter values outside their valid range."""


class NumericalError(LCMFlowError, ArithmeticError):
    """Non-finite values produced during assembly or iteration."""
