"""Exception types raised across the package."""


class CspdError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(CspdError, ValueError):
    pass


class InvalidParameterError(CspdError, ValueError):
    pass


class DegenerateStateError(CspdError, ArithmeticError):
    """Optimizer state with a vanishing precoder norm."""


class DivergenceError(CspdError, FloatingPointError):
    """Raised when the optimizer produces non-finite values.

    The trace collected up to the failure is attached as ``trace`` so that
    callers can inspect how the run blew up.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class MultiplierBracketError(CspdError, RuntimeError):
    """Bisection on the WMMSE power multiplier could not bracket a root."""


class SolverError(CspdError, RuntimeError):
    pass


class UndefinedNmseError(CspdError, ValueError):
    pass


class ConfigError(CspdError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
