"""Exception types shared across the package."""


class NomaVlcError(Exception):
    """Base class for all package errors."""


class DomainError(NomaVlcError, ValueError):
    """Argument outside the domain of a function."""


class PoleError(DomainError):
    """Evaluation at a pole of a closed form; a quadrature fallback is usually available."""


class RangeError(NomaVlcError, ValueError):
    """Argument beyond a documented evaluation guard."""


class ConvergenceError(NomaVlcError, ArithmeticError):
    """A series or iteration did not converge within its term budget."""


class AccuracyError(NomaVlcError, ArithmeticError):
    """Adaptive quadrature ran out of subdivisions.

    The best estimate and its error bound are attached as ``value`` and ``error``.
    """

    def __init__(self, message, value=float("nan"), error=float("inf")):
        super().__init__(message)
        self.value = value
        self.error = error


class DivergenceError(NomaVlcError, ValueError):
    """Hermite series requested for beta >= alpha, where it does not converge."""


class OrderingError(NomaVlcError, ValueError):
    """Channel gains were not sorted ascending."""


class InfeasibleError(NomaVlcError, ValueError):
    """QoS thresholds cannot be met within the power budget."""


class IterationDegeneracyError(NomaVlcError, ArithmeticError):
    """The power recursion hit a non-positive denominator."""


class ConfigError(NomaVlcError, ValueError):
    """Malformed or inconsistent experiment configuration."""
