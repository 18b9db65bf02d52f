"""Exception types shared across the package."""


class AdexSimError(Exception):
    """Base class for all package errors."""


class NonFiniteState(AdexSimError):
    """An integration step produced NaN or Inf (dt too large for the chosen parameters)."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (at t = {time:.9g} s)")
        self.time = time


class NotLeakOverThreshold(AdexSimError):
    """The leak/stimulus equilibrium potential does not exceed the detection threshold."""


class WindowTooShort(AdexSimError):
    """Not enough pre-stimulus samples to establish a baseline."""


class FitFailed(AdexSimError):
    """A measurement fit did not meet its quality gate (non-monotone trace, low R^2, empty window)."""


class NotMonotone(AdexSimError):
    """The probed bias-to-parameter map is not monotone over the given bounds."""


class NotConverged(AdexSimError):
    """Calibration stopped above tolerance; carries the best residual reached."""

    def __init__(self, message, best_bias=None, best_residual=None):
        super().__init__(message)
        self.best_bias = best_bias
        self.best_residual = best_residual


class InvalidConfig(AdexSimError):
    """A sub-circuit is disabled (or inconsistent) but one of its parameters is requested."""


class ParseError(AdexSimError):
    """Config text could not be parsed; carries line/column."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ValidationError(AdexSimError):
    """A parsed config violates an invariant; names the violated constraint."""
