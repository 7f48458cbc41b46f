"""Exception hierarchy.

The CLI maps the three top-level families onto distinct exit codes.
"""


class PaleocorrError(Exception):
    """Base class for all package errors."""


class ConfigError(PaleocorrError):
    """Invalid or unknown configuration."""


class DataError(PaleocorrError):
    """Problem with input data (parsing, overlap, ranges)."""


class NumericalError(PaleocorrError):
    """A computation could not produce a meaningful number."""


class ParameterError(DataError, ValueError):
    """Argument outside its mathematical domain."""


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class CurveRangeError(DataError):
    """Lookup outside the calibration curve (no extrapolation)."""


class CalibrationError(NumericalError):
    """A radiocarbon date has no support on the calibration curve."""


class DegenerateChronologyError(NumericalError):
    """No stratigraphically consistent age model could be drawn."""


class ZeroVarianceError(NumericalError):
    """Series has no variance to normalize by."""


class NoOverlapError(DataError):
    """Two series do not overlap in time."""


class InsufficientOverlapError(DataError):
    """Too few concurrent pairs after alignment."""


class EmptySampleError(DataError):
    """Sampling produced no observations."""


class UndefinedPersistenceError(NumericalError):
    """No pair of observations near the requested lag."""
