"""Exception types raised by the toolkit."""


class EmptySeriesError(ValueError):
    """An operation received a series (or path length) of zero."""


class NumericalConditioningError(ArithmeticError):
    """A covariance factorization failed, typically from rounding on a near-singular matrix."""


class PrecisionError(ArithmeticError):
    """A quadrature or iterative scheme did not reach the requested accuracy."""
