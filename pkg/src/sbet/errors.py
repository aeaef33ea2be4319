"""Exception types shared across the package."""


class SbetError(Exception):
    """Base class for all package errors."""


class ValidationError(SbetError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(SbetError, ArithmeticError):
    """A quadrature, tail or convergence check failed.

    ``diagnostic`` carries whatever the failing routine knew (e.g. the
    truncation time it would have needed).
    """

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class PipelineOrderError(SbetError, RuntimeError):
    """A later stage was requested before the stage that feeds it."""
