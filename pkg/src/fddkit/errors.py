"""Exception types shared across the package."""


class FddError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FddError):
    """Array shapes or layer sizes do not line up."""


class NumericError(FddError):
    """A computation produced or received non-finite values."""


class NumericDivergenceError(NumericError):
    """Training or simulation blew up; message names the step where it happened."""


class FormatError(FddError):
    """A data file does not match the expected layout."""


class DesignError(FddError):
    """A requested signal design is infeasible under the stated constraints."""


class ConfigError(FddError):
    """A configuration value is missing, malformed, or out of range."""


class SplitError(FddError):
    """A requested data split cannot be honored."""


class UndefinedMetricError(FddError):
    """A metric's denominator is empty (no samples of the required class)."""
