"""Exception types raised by the risloc package."""


class RislocError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(RislocError, ValueError):
    """MS (or BS) sits directly below/above an RIS element; azimuth undefined."""


class DimensionMismatch(RislocError, ValueError):
    pass


class IndexOutOfRange(RislocError, IndexError):
    pass


class SingularFim(RislocError, ArithmeticError):
    """The 2x2 position FIM is (numerically) singular."""


class LineSearchFailed(RislocError, ArithmeticError):
    """Backtracking shrank the step below the floor without sufficient decrease.

    The partial optimization trace is attached as ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class GridTooLarge(RislocError, ValueError):
    pass


class ConfigError(RislocError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
