"""Exception hierarchy shared by the library and the command line."""


class HSDetectError(Exception):
    """Base class for all errors raised by hsdetect."""


class NotPositiveDefinite(HSDetectError, ValueError):
    """A matrix that must be symmetric positive definite failed to factor."""


class ZeroVector(HSDetectError, ValueError):
    """A vector that must be non-zero (e.g. a target signature) is zero."""


class DomainError(HSDetectError, ValueError):
    """A scalar parameter is outside its admissible domain."""


class DimensionMismatch(HSDetectError, ValueError):
    """Array shapes are inconsistent with each other."""


class NoConvergence(HSDetectError, RuntimeError):
    """A scalar solver exhausted its iteration budget."""


class EmptyInput(HSDetectError, ValueError):
    """An operation received an empty sample."""


class InsufficientTrials(HSDetectError, RuntimeError):
    """A Monte-Carlo estimate recorded zero events."""


class ConfigError(HSDetectError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(HSDetectError, ValueError):
    """A data file could not be parsed; carries the offending location."""

    def __init__(self, path, line, column, message):
        super().__init__(f"{path}:{line}:{column}: {message}")
        self.path = path
        self.line = line
        self.column = column


class AsymmetryError(HSDetectError, ValueError):
    """A covariance file is too far from symmetric to be repaired."""
