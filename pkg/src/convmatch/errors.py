"""Exception types raised across the package."""


class ConvmatchError(Exception):
    """Base class for every error the package raises on purpose."""


class ConfigError(ConvmatchError, ValueError):
    """A parameter set, schedule or scenario file failed validation."""


class DivergenceError(ConvmatchError, RuntimeError):
    """Integration produced a non-finite state.

    ``last_valid_time`` is the last grid time whose state was finite and
    ``trace`` (when available) holds everything recorded up to then.
    """

    def __init__(self, message, last_valid_time, trace=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time
        self.trace = trace


class ControllerUndefinedError(ConvmatchError, ArithmeticError):
    """A control law divides by a quantity that is (numerically) zero."""


class AmplitudeUndefinedError(ConvmatchError, ArithmeticError):
    """A signal passed through the origin inside an estimation window."""


class SingularityError(ConvmatchError, ArithmeticError):
    """A matrix or projection needed by an analysis is singular."""


class NoSolutionError(ConvmatchError, ValueError):
    """The requested operating point has no real steady state."""


class SolverError(ConvmatchError, RuntimeError):
    """Newton iteration did not converge; ``best_residual`` is attached."""

    def __init__(self, message, best_residual):
        super().__init__(message)
        self.best_residual = best_residual
