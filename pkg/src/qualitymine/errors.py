"""Exception hierarchy shared across the toolkit."""


class QualityMineError(Exception):
    """Base class for every error raised by qualitymine."""


class ParseError(QualityMineError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(QualityMineError):
    pass


class CellError(QualityMineError):
    def __init__(self, message, row, column):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


class ImputationError(QualityMineError):
    pass


class ReferenceLookupError(ImputationError):
    pass


class ScoreRangeError(QualityMineError):
    pass


class SpecError(QualityMineError):
    pass


class SplitError(QualityMineError):
    pass


class MetricError(QualityMineError):
    pass


class RiskError(MetricError):
    pass


class FitError(QualityMineError):
    pass


class PredictionError(QualityMineError):
    pass


class VoteError(QualityMineError):
    pass


class OverrideError(QualityMineError):
    pass


class RankError(QualityMineError):
    """Design matrix is numerically rank deficient."""

    def __init__(self, message, column=None):
        self.column = column
        super().__init__(message)


class DomainError(QualityMineError, ValueError):
    pass


class DesignError(QualityMineError):
    pass


class ConfigError(QualityMineError):
    pass


class ExtrapolationWarning(UserWarning):
    """A prediction was requested outside the coded [-1, 1] cube."""
