"""Exception hierarchy for the identification pipeline."""


class IdentError(Exception):
    """Base class for all errors raised by this package."""


# interval arithmetic
class IntervalError(IdentError, ValueError):
    pass


class BoundsInverted(IntervalError):
    pass


class NonFinite(IntervalError):
    pass


class NegativeRadius(IntervalError):
    pass


class EmptyIntersection(IntervalError):
    pass


class DivisorContainsZero(IntervalError, ZeroDivisionError):
    pass


class DimensionMismatch(IdentError, ValueError):
    pass


# structural model
class ModelError(IdentError, ValueError):
    pass


class UnknownReference(ModelError):
    pass


class StrainOnUnsupportedKind(ModelError):
    pass


class CoverageGap(ModelError):
    pass


class DuplicateConstraint(ModelError):
    pass


class DegenerateGeometry(ModelError):
    pass


class UnsupportedLoadShape(ModelError):
    pass


class NonPositiveStiffness(IdentError, ValueError):
    pass


# solvers
class SingularSystem(IdentError, ArithmeticError):
    pass


class TooFewParams(IdentError, ValueError):
    pass


class LineSearchFailed(IdentError, RuntimeError):
    pass


class DivergedObjective(IdentError, RuntimeError):
    pass


class EnclosureDiverged(IdentError, RuntimeError):
    """The interval fixed-point iteration blew up or failed to settle."""


class SingularDeviationSystem(EnclosureDiverged):
    """The deviation matrix cannot be inverted, so no bounded enclosure exists.

    Typical cause: an under-determined problem run with ``gamma = 0``.
    Setting a positive regularizer weight usually fixes it.
    """


class AllRunsFailed(IdentError, RuntimeError):
    pass


class OutOfDomain(IdentError, ValueError):
    pass
