"""Exception types raised by shotmetric."""


class ShotMetricError(Exception):
    """Base class for all library errors."""


class ValidationError(ShotMetricError, ValueError):
    """Input data violates a structural invariant (shapes, ranges, axes)."""


class DimensionMismatch(ValidationError):
    pass


class AxisMismatch(ValidationError):
    pass


class NumericalError(ShotMetricError, ArithmeticError):
    """Input is well-formed but numerically degenerate for the requested head."""


class ZeroNormVector(NumericalError):
    pass


class ZeroSupport(NumericalError):
    pass


class ZeroQuery(NumericalError):
    pass


class DegenerateRatio(NumericalError):
    pass


class FactorizationError(ShotMetricError, RuntimeError):
    """Cholesky factorization of a system that should be SPD failed.

    With a strictly positive ridge term this cannot happen for finite input,
    so it signals a bug or overflow rather than bad user data.
    """
