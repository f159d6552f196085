"""Exception hierarchy shared by all modules."""


class InfluenceLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(InfluenceLabError):
    """Bad experiment configuration or command-line input."""


class NumericFailure(InfluenceLabError):
    """A numerical routine could not produce a trustworthy answer."""


class NotPositiveDefinite(NumericFailure):
    pass


class NoConvergence(NumericFailure):
    pass


class NegativeQuadraticForm(NumericFailure):
    pass


class MaxIterations(NumericFailure):
    pass


class Diverged(NumericFailure):
    pass


class DivergedNonFinite(NumericFailure):
    pass


class BreakdownZeroCurvature(NumericFailure):
    pass


class NonpositiveRitzValue(NumericFailure):
    pass


class DomainMismatch(InfluenceLabError, ValueError):
    pass


class EmptyDataset(InfluenceLabError, ValueError):
    pass


class EmptyInput(InfluenceLabError, ValueError):
    pass


class AllZeroWeights(InfluenceLabError, ValueError):
    pass


class UnsupportedDecay(InfluenceLabError, ValueError):
    pass


class SchemaMismatch(InfluenceLabError, ValueError):
    pass


class ParseError(InfluenceLabError, ValueError):
    def __init__(self, line: int, column: str, message: str = ""):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column!r}: {message}".rstrip(": "))
