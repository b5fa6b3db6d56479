"""Exception hierarchy.

Every error carries a machine-readable ``code`` and a ``category`` that the
CLI maps to its exit status (config 2, data 3, numerical 4).
"""


class FrtError(Exception):
    """Base class for all errors raised by frtvar."""

    code = "FRT_ERROR"
    category = "numerical"


# ---- data / validation ------------------------------------------------


class DataError(FrtError):
    code = "DATA_ERROR"
    category = "data"


class LengthMismatch(DataError):
    code = "LENGTH_MISMATCH"


class DegenerateArm(DataError):
    code = "DEGENERATE_ARM"


class MissingValue(DataError):
    code = "MISSING_VALUE"


class BadInterceptColumn(DataError):
    code = "BAD_INTERCEPT_COLUMN"


class ParseError(DataError):
    code = "PARSE_ERROR"

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class IncompatibleNull(DataError):
    code = "INCOMPATIBLE_NULL"


class EmptySample(DataError):
    code = "EMPTY_SAMPLE"


class UnequalSizes(DataError):
    code = "UNEQUAL_SIZES"


class TiedValues(DataError):
    code = "TIED_VALUES"


class DominanceViolated(DataError):
    code = "DOMINANCE_VIOLATED"


class SampleTooSmall(DataError):
    code = "SAMPLE_TOO_SMALL"


# ---- numerical --------------------------------------------------------


class NumericalError(FrtError):
    code = "NUMERICAL_ERROR"
    category = "numerical"


class DegenerateVariance(NumericalError):
    code = "DEGENERATE_VARIANCE"


class DegenerateKurtosis(NumericalError):
    code = "DEGENERATE_KURTOSIS"


class RankDeficient(NumericalError):
    code = "RANK_DEFICIENT"


class Underdetermined(NumericalError):
    code = "UNDERDETERMINED"


class DomainError(NumericalError):
    code = "DOMAIN_ERROR"


# ---- configuration ----------------------------------------------------


class ConfigError(FrtError):
    code = "CONFIG_ERROR"
    category = "config"


class EmptyGrid(ConfigError):
    code = "EMPTY_GRID"


EXIT_CODES = {"config": 2, "data": 3, "numerical": 4}
