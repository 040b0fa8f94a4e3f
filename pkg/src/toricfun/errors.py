"""Exception types shared across the package."""


class ToricFunError(Exception):
    """Base class for all package errors."""


class DomainError(ToricFunError, ValueError):
    """An argument lies outside the domain of an operation."""


class SpecError(ToricFunError, ValueError):
    """A metric description or configuration violates its invariants."""


class AccuracyError(ToricFunError, ArithmeticError):
    """A numerical routine could not reach the requested tolerance.

    Attributes:
        estimate: best value obtained.
        error: estimated absolute error of ``estimate``.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
