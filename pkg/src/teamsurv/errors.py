"""Exception hierarchy.

Everything raised for bad input derives from :class:`ValidationError` (a
``ValueError``), so callers that only care about "the input was wrong" can
catch one class.  The CLI maps ``ValidationError`` to exit code 1 and
``OSError`` to exit code 2.
"""


class TeamSurvError(Exception):
    """Base class for all package errors."""


class ValidationError(TeamSurvError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonPositiveMean(ValidationError):
    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class NonContiguousTime(ValidationError):
    pass


class BadAlpha(ValidationError):
    pass


class BadK(ValidationError):
    pass


class TimeSkew(ValidationError):
    pass


class EmptyTeam(ValidationError):
    pass


class NegativeInput(ValidationError):
    pass


class LeaderInTeam(ValidationError):
    pass


class OmegaNotSubset(ValidationError):
    pass


class SurrogateMissing(ValidationError):
    pass


class SurrogateKindMismatch(ValidationError):
    pass


class NonPositivePrediction(ValidationError):
    pass


class RankDeficient(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class ZeroReps(ValidationError):
    pass


class InvalidHorizon(ValidationError):
    pass


class NoBracket(TeamSurvError):
    pass


class BudgetExhausted(TeamSurvError):
    pass


class BadSimId(ValidationError):
    pass


class NoChangePoint(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line


class NegativeCount(ParseError):
    pass


class EmptySeries(ValidationError):
    pass
