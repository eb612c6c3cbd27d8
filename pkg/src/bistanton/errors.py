"""Exception hierarchy shared by all modules."""


class BistantonError(Exception):
    """Base class for errors raised by this package."""


class DomainError(BistantonError, ValueError):
    """Parameters fall outside the domain where an expression is defined."""


class PreconditionError(BistantonError, ValueError):
    """An input violates a documented precondition."""


class SingularPointError(BistantonError, ValueError):
    """Evaluation at a point where the quantity is 0/0 (e.g. a fixed point)."""


class NoRootError(BistantonError, RuntimeError):
    """A bracketed root search found no sign change."""


class ConvergenceError(BistantonError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    Attributes
    ----------
    best_miss : float
        Smallest residual reached before giving up.
    """

    def __init__(self, message, best_miss=float("nan"), detail=None):
        super().__init__(message)
        self.best_miss = best_miss
        self.detail = detail


class StiffIntegrationError(BistantonError, RuntimeError):
    """The adaptive integrator's step size underflowed."""

    def __init__(self, message, t_fail):
        super().__init__(message)
        self.t_fail = t_fail


class InstabilityError(BistantonError, RuntimeError):
    """A stochastic trajectory left the region where the scheme is stable."""
