"""Exception hierarchy shared by all modules."""


class OdetrackError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(OdetrackError, ValueError):
    """Invalid problem, tracker or run configuration."""


class DimensionError(OdetrackError, ValueError):
    """Array shapes do not agree."""


class EvaluationError(OdetrackError, ArithmeticError):
    """An evaluator returned non-finite values."""

    def __init__(self, message, x=None, t=None):
        super().__init__(message)
        self.x = x
        self.t = t


class InfeasiblePointError(OdetrackError, ValueError):
    """A point violates an inequality constraint."""


class SingularityError(OdetrackError, ArithmeticError):
    """A matrix that must be nonsingular is not (LICQ failure for J J^T)."""

    def __init__(self, message, x=None, t=None):
        super().__init__(message)
        self.x = x
        self.t = t


class DivergenceError(OdetrackError, ArithmeticError):
    """A Runge-Kutta stage produced non-finite values."""

    def __init__(self, message, t=None, stage=None):
        super().__init__(message)
        self.t = t
        self.stage = stage


class BudgetError(OdetrackError, RuntimeError):
    """An iteration or step budget was exhausted."""


class RelaxationStallError(BudgetError):
    """The inner u, v relaxation did not reach its threshold."""


class InitializationError(OdetrackError, RuntimeError):
    """The static solve used to start tracking failed."""


class NoConvergenceError(BudgetError):
    """A static local solve did not reach its KKT tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedDimensionError(OdetrackError, ValueError):
    """Operation only supports small dimensions."""


class OrderingError(OdetrackError, ValueError):
    """Time interval endpoints out of order."""


class CatalogLookupError(OdetrackError, KeyError):
    """Unknown catalog problem name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""
