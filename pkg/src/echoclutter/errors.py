"""Exception types shared across the package."""


class EchoClutterError(Exception):
    """Base class for all package-specific errors."""


class FormatError(EchoClutterError):
    """A file does not conform to its declared binary or text format."""


class LengthError(FormatError):
    """A payload is shorter or longer than its header promises."""


class RangeError(EchoClutterError, ValueError):
    """A value is outside its documented range (non-finite or out of [0, 1])."""


class DimensionError(EchoClutterError, ValueError):
    """Array shapes are inconsistent with an operation's contract."""


class ParameterError(EchoClutterError, ValueError):
    """A configuration or argument value violates its invariants."""


class PlacementError(EchoClutterError):
    """A clutter placement region is empty or falls outside the image."""


class ContractError(EchoClutterError):
    """A caller violated an API precondition (missing gradient, empty split, ...)."""


class NumericError(EchoClutterError):
    """A numerical routine failed to converge."""


class UndefinedMetricError(EchoClutterError):
    """A metric has no defined value (e.g. every patch was excluded)."""


class DataError(EchoClutterError):
    """Dataset files are missing or inconsistent."""
