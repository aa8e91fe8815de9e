"""Exception hierarchy shared by all dynbc modules."""


class DynBCError(Exception):
    """Base class for errors raised by dynbc."""


class ConfigurationError(DynBCError, ValueError):
    """Invalid mesh sizes, scenario keys or parameter values."""

    def __init__(self, message, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class NumericalError(DynBCError, RuntimeError):
    """A solver failed to reach its tolerance.

    Carries the last residual and, when meaningful, the last iterate so
    callers can inspect how far the solve got.
    """

    def __init__(self, message, residual=None, iterate=None):
        if residual is not None:
            message = f"{message} (last residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class StepFailure(NumericalError):
    """A single time step could not be completed; the caller should shrink dt."""
