"""Exception hierarchy shared by the solver, analysis and harness layers."""


class NLSLabError(Exception):
    """Base class for every error raised by this package."""


class GridError(NLSLabError, ValueError):
    pass


class SolverError(NLSLabError):
    """A run was aborted; ``t`` is the simulation time of the failure."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class TruncationBreach(SolverError):
    pass


class NumericalBlowup(SolverError):
    pass


class BudgetExceeded(NLSLabError):
    pass


class DegenerateDensity(NLSLabError, ValueError):
    pass


class MonotonicityViolation(NLSLabError):
    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class ConfigError(NLSLabError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
