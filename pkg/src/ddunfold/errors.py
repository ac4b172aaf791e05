"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class ConvergenceError(RuntimeError):
    """An iterative routine stopped before meeting its tolerance.

    The last iterate is kept on ``last`` so callers can inspect or reuse it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class IntegrityError(RuntimeError):
    """A file, trace or checkpoint is inconsistent with what it claims to be."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""
