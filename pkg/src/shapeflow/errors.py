"""Exception hierarchy.

Validation errors map to CLI exit code 2, numerical failures to exit code 1.
"""


class ShapeflowError(Exception):
    """Base class for all package errors."""


class ValidationError(ShapeflowError, ValueError):
    """Input violates a precondition."""


class InvalidPolygon(ValidationError):
    pass


class HypothesisViolated(ValidationError):
    """A triangle configuration does not satisfy a theorem's ordering hypothesis."""


class DegenerateFlowTime(ValidationError):
    """Flow time outside the admissible range, or the flowed image is degenerate."""


class NonConvexInput(ValidationError):
    pass


class UnknownTag(ValidationError, KeyError):
    pass


class UnsupportedKind(ValidationError):
    pass


class NumericalError(ShapeflowError, ArithmeticError):
    """A solver or time stepper failed."""


class SolveFailure(NumericalError):
    pass


class ConvexityLost(NumericalError):
    pass


class OriginEscaped(NumericalError):
    pass
