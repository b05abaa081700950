"""Exception hierarchy shared by every module."""


class DevaError(Exception):
    """Base class for all library errors."""


class InvalidInput(DevaError, ValueError):
    pass


class ShapeMismatch(DevaError, ValueError):
    pass


class DegenerateBasis(DevaError, ArithmeticError):
    pass


class NotPositiveDefinite(DevaError, ArithmeticError):
    pass


class UndefinedForZero(DevaError, ValueError):
    pass


class InvalidConfig(DevaError, ValueError):
    pass


class IoError(DevaError, OSError):
    pass


class NumericalBreakdown(DevaError, ArithmeticError):
    """A non-finite value appeared; ``step`` is the 1-based step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
