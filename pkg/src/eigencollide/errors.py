"""Exception hierarchy.

The CLI maps each family to an exit code: configuration problems exit 1,
numerical/resource problems exit 2, inconclusive resolution exits 3.
"""


class EigenCollideError(Exception):
    """Base class for all package errors."""


class ConfigError(EigenCollideError, ValueError):
    pass


class DomainError(ConfigError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(ConfigError):
    pass


class NumericalError(EigenCollideError, ArithmeticError):
    pass


class ResourceError(EigenCollideError):
    """A configured budget (grid points, refinement points) was exceeded."""


class KernelNotPSDError(NumericalError):
    pass


class ContourDegenerateError(NumericalError):
    """An eigenvalue lies on or too close to the integration contour."""


class AccuracyError(NumericalError):
    pass


class SpectralDriftError(NumericalError):
    """A cluster of eigenvalues left its contour or split across contours."""


class OutOfNeighborhoodError(NumericalError):
    """A projected or Gram-Schmidt vector collapsed below the 0.5 guard."""


class OutOfChartError(OutOfNeighborhoodError):
    pass


class PhaseUndefinedError(NumericalError):
    pass


class InfeasibleError(ConfigError):
    pass


class EmptyRegimeError(DomainError):
    """The exponent sum does not exceed the codimension; the set is a.s. empty."""


class InconclusiveResolutionError(EigenCollideError):
    def __init__(self, message, fraction=None):
        super().__init__(message)
        self.fraction = fraction
