"""Exception types raised across the package."""


class StarError(Exception):
    """Base class for all errors raised by star_retinex."""


class InvalidInputError(StarError, ValueError):
    pass


class InvalidIlluminantError(StarError, ValueError):
    pass


class FormatError(StarError, ValueError):
    """Malformed raw grid stream."""


class SolverError(StarError, RuntimeError):
    """Iterative solve did not reach its tolerance.

    ``residual`` is the final relative residual. ``context`` is filled in by
    the engine with (outer, inner, variable) when the failure happens inside
    a decomposition.
    """

    def __init__(self, message, residual=float("nan"), context=None):
        super().__init__(message)
        self.residual = residual
        self.context = context


class SingularSystemError(StarError, RuntimeError):
    pass
