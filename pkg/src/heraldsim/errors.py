"""Exception types shared across the package."""


class HeraldSimError(Exception):
    """Base class for all package errors."""


class ValidationError(HeraldSimError, ValueError):
    """A configuration or input value violates its contract."""


class BudgetExceededError(ValidationError):
    """Expected event volume exceeds the in-memory budget and streaming was not requested."""


class UndefinedRatioError(HeraldSimError, ZeroDivisionError):
    """A ratio metric was requested with a zero denominator."""


class NoConvergenceError(HeraldSimError, RuntimeError):
    """Calibration search failed to reach the requested tolerance.

    Carries the best residual found so callers can report how close the
    search got.
    """

    def __init__(self, message: str, residual: float, best_params: dict | None = None):
        super().__init__(message)
        self.residual = residual
        self.best_params = best_params or {}


class ExternalDataError(HeraldSimError, ValueError):
    """A time-tag file violates the interchange format."""
