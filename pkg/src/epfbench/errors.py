"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: usage/configuration problems exit 1,
data problems exit 2, numeric/convergence problems exit 3.
"""


class EpfError(Exception):
    """Base class for all toolbox errors."""

    exit_code = 2


class ConfigurationError(EpfError):
    """Invalid option, unknown enumeration value, or bad configuration."""

    exit_code = 1


class DataError(EpfError):
    """Base class for problems with input data."""

    exit_code = 2


class ParseError(DataError):
    """Malformed dataset file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    """Dataset file does not have the required columns."""


class CadenceError(DataError):
    """Timestamps are not on an hourly grid."""


class CalendarError(DataError):
    """A day does not have 23, 24, or 25 hourly observations, or dates gap."""


class TransportError(DataError):
    """Download failed and no cached copy exists."""


class SplitError(DataError):
    """Train/test split impossible (insufficient history)."""


class SliceError(DataError):
    """Calibration window does not fit before the target day."""


class FeatureError(DataError):
    """Feature row cannot be built (missing lags or empty feature mask)."""


class TransformError(DataError):
    """Transform fit on empty/invalid data."""


class ShapeError(DataError):
    """Array arguments have mismatched shapes or dates."""


class MetricError(DataError):
    """Metric cannot be computed from the given inputs."""


class CombineError(DataError):
    """Ensemble members disagree in shape or date index."""


class NumericError(EpfError):
    """Non-finite inputs or numerically impossible solve."""

    exit_code = 3


class DivergenceError(NumericError):
    """Training loss became NaN; carries the epoch where it happened."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateDifferentialError(NumericError):
    """Loss differential has zero variance (identical forecasts)."""


class ConditioningError(NumericError):
    """Singular covariance in a test statistic."""


class ConvergenceWarning(UserWarning):
    """Iterative solver hit its sweep budget before reaching tolerance."""
