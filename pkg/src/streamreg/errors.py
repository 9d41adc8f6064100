"""Exception types shared across the package."""


class StreamRegError(Exception):
    """Base class for all streamreg errors."""


class DomainError(StreamRegError, ValueError):
    """A basis index or evaluation point is outside its valid range."""


class QuadratureError(StreamRegError, ArithmeticError):
    """Numerical integration failed to stabilize under node doubling."""


class DegenerateDensityError(StreamRegError, ArithmeticError):
    """The clipped density estimate is non-positive everywhere."""


class StateError(StreamRegError, RuntimeError):
    """An operation was requested on a state that cannot serve it yet."""


class IllConditionedSystemError(StreamRegError, ArithmeticError):
    """The penalized Gram system admits no SPD factorization."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class TuningError(StreamRegError, RuntimeError):
    """Cross-validation could not produce a feasible tuning pair."""


class CheckpointError(StreamRegError, ValueError):
    """A checkpoint record is malformed or inconsistent."""
