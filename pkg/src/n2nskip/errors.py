class N2NSkipError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(N2NSkipError, ValueError):
    pass


class InfeasibleDensityError(N2NSkipError, ValueError):
    def __init__(self, message, min_density=None):
        super().__init__(message)
        self.min_density = min_density


class ConvergenceError(N2NSkipError, ArithmeticError):
    def __init__(self, message, residual=None, sweeps=None):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class IncomparableError(N2NSkipError, ValueError):
    """Two results cannot be compared (different sizes, times or bases)."""


class ConfigError(N2NSkipError, ValueError):
    pass
