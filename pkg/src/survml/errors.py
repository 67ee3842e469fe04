"""Exception types raised across the toolkit."""


class SurvivalError(ValueError):
    """Base class for input and model errors."""


class MissingColumn(SurvivalError):
    pass


class ParseError(SurvivalError):
    pass


class EmptyTable(SurvivalError):
    pass


class IncompatibleSchema(SurvivalError):
    pass


class NonPositiveTime(SurvivalError):
    pass


class InvalidSpec(SurvivalError):
    pass


class NoEvents(SurvivalError):
    pass


class DegenerateSplit(SurvivalError):
    pass


class SingularHessian(SurvivalError):
    pass


class DimensionMismatch(SurvivalError):
    pass


class InvalidHyperparameter(SurvivalError):
    pass


class TooFewDistinctTimes(SurvivalError):
    pass


class ShapeMismatch(SurvivalError):
    pass


class NoComparablePairs(SurvivalError):
    pass


class ZeroHazardSum(SurvivalError):
    pass


class InvalidK(SurvivalError):
    pass


class AllFitsFailed(SurvivalError):
    pass


class DivergedLoss(RuntimeError):
    """Training produced a non-finite loss."""


class ConvergenceWarning(UserWarning):
    """Newton iterations stopped at ``max_iter`` without meeting ``tol``."""
