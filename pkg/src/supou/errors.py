"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside its mathematical domain (e.g. a negative lag)."""


class ParameterError(DomainError):
    """A model parameter vector violates its invariants."""


class DataError(ValueError):
    """Input data is missing, malformed, or too short for the requested operation."""


class WeightingMatrixError(ValueError):
    """A weighting matrix is not symmetric positive definite."""


class SingularWeightingError(RuntimeError):
    """The moment covariance is singular beyond what ridge regularization can fix."""


class InitializationError(RuntimeError):
    """The closed-form initializer is not applicable to the supplied moments."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""
