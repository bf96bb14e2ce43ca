"""Exception hierarchy shared by all modules."""


class DSDEError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(DSDEError, ValueError):
    pass


class InvalidDataError(DSDEError, ValueError):
    pass


class ShapeMismatchError(DSDEError, ValueError):
    pass


class UnsupportedFunctionError(DSDEError, TypeError):
    pass


class InsufficientPathsError(DSDEError):
    pass


class NumericalBlowupError(DSDEError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class MapDivergenceError(DSDEError):
    """Inner fixed-point iteration did not converge."""

    def __init__(self, message, last_distance=None):
        super().__init__(message)
        self.last_distance = last_distance


class ContinuationFailure(DSDEError):
    """Homotopy step size fell below the allowed minimum."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InvalidSystemError(DSDEError, ValueError):
    pass


class InvalidHamiltonianError(InvalidSystemError):
    pass


class CFLError(DSDEError, ValueError):
    def __init__(self, message, max_dt=None):
        super().__init__(message)
        self.max_dt = max_dt


class DomainTooSmallError(DSDEError, ValueError):
    pass
