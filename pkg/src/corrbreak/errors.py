"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (the input itself is
unusable) and :class:`MethodError` (the input is fine but a procedure cannot
produce an answer, e.g. nothing survives thresholding). The CLI maps them to
exit codes 2 and 3.
"""


class ChangePointError(Exception):
    """Base class for all package errors."""


class ConfigError(ChangePointError, ValueError):
    """Invalid configuration value (trial count, quantile level, ...)."""


class TrialCountZero(ConfigError):
    def __init__(self):
        super().__init__("number of signflip trials must be >= 1")


class DataError(ChangePointError, ValueError):
    """The observation matrix (or file) cannot be used."""


class InvalidObservations(DataError):
    pass


class ZeroVarianceRow(DataError):
    def __init__(self, row_index):
        self.row_index = row_index
        super().__init__(f"row {row_index} has zero (or numerically vanishing) variance")


class DimensionTooSmall(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class SplitOutOfRange(DataError):
    pass


class RaggedRows(DataError):
    def __init__(self, line, expected, found):
        self.line = line
        super().__init__(f"line {line}: expected {expected} cells, found {found}")


class NonNumericCell(DataError):
    def __init__(self, row, col, value):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric cell {value!r} at row {row}, column {col}")


class EmptyFile(DataError):
    pass


class MethodError(ChangePointError):
    """A procedure could not produce a result for valid input."""


class EmptySupport(MethodError):
    def __init__(self, threshold):
        self.threshold = threshold
        super().__init__(f"no pair exceeds the threshold {threshold!r}")


class ZeroBandwidth(MethodError):
    pass


class MinorityWindowTooSmall(MethodError):
    pass


class InvalidScenario(ChangePointError, ValueError):
    pass


class UnsupportedDistribution(MethodError):
    pass
