"""Exception types raised by the solver and its tooling."""


class PNPError(Exception):
    """Base class for all package errors."""


class ParameterError(PNPError, ValueError):
    """Invalid physical or dimensionless parameter."""


class SingularSystemError(PNPError, ArithmeticError):
    """A banded solve hit a zero pivot.

    Attributes
    ----------
    row : int
        Zero-based row at which elimination broke down.
    """

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"singular banded system: zero pivot at row {row}")


class NonFiniteStateError(PNPError, ArithmeticError):
    """A time step produced NaN or inf values."""

    def __init__(self, message, t=None, step=None, iteration=None):
        self.t = t
        self.step = step
        self.iteration = iteration
        super().__init__(message)


class InvalidSampleError(PNPError, ValueError):
    """A diagnostic needs positive concentrations but found c <= 0."""


class InconclusiveOrderError(PNPError, ArithmeticError):
    """Successive values are too close for a meaningful order estimate."""


class ConvergenceError(PNPError, RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    residual : float
        Max-norm residual at the last iterate.
    """

    def __init__(self, message, residual=float("nan")):
        self.residual = residual
        super().__init__(message)


class ConfigError(PNPError, ValueError):
    """Malformed or inconsistent run configuration."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        elif key is not None:
            prefix = f"{key}: "
        super().__init__(prefix + message)
