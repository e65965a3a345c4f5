"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration (quadrature order, solver settings, CLI config)."""


class ZeroThetaError(ValueError):
    """Effective capacity requested at theta = 0; use the average rate instead."""


class ConvergenceError(RuntimeError):
    """An iterative procedure hit its iteration limit.

    The last iterate is attached so callers can inspect how far the
    procedure got.
    """

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
