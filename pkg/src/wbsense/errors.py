"""Exception hierarchy shared by all wbsense modules."""


class WbsenseError(Exception):
    """Base class for all library errors."""


class ConfigurationError(WbsenseError):
    """Invalid configuration value (bad modulation name, rolloff out of range, ...)."""


class InvalidInputError(WbsenseError):
    """Structurally invalid input to an operation (duplicate subband, bad permutation, ...)."""


class ShapeError(InvalidInputError):
    """Array shapes do not satisfy an operation's contract."""


class PreconditionError(WbsenseError):
    """A required upstream artifact or condition is missing."""


class CalibrationError(PreconditionError):
    """Threshold calibration cannot proceed (no H0 instances for a subband)."""


class UndefinedMetricError(WbsenseError):
    """A metric denominator is zero; the metric is undefined."""
