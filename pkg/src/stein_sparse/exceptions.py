"""Exception hierarchy shared by every module."""


class SteinSparseError(Exception):
    """Base class for all package errors."""


class ValidationError(SteinSparseError, ValueError):
    """Input failed a shape, range or structural check."""


class NotPositiveDefiniteError(ValidationError):
    """A matrix expected to be SPD is not (Cholesky failed or a negative eigenvalue)."""


class ConvergenceError(SteinSparseError, RuntimeError):
    """An iterative routine hit its iteration cap.

    The last iterate and the final residual are kept so callers can decide
    whether the partial answer is usable.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
