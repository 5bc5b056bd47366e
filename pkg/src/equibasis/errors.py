"""Exception hierarchy shared by the package."""


class EquibasisError(Exception):
    """Base class for all package errors."""


class DimensionError(EquibasisError, ValueError):
    """Operand shapes are incompatible."""


class FieldError(EquibasisError, TypeError):
    """Real/complex scalar fields do not match."""


class SizeError(EquibasisError, MemoryError):
    """A dense materialization would exceed the configured cap."""


class CatalogError(EquibasisError, ValueError):
    """Unknown group name or invalid group parameters."""


class GroupMismatchError(EquibasisError, ValueError):
    """Representations or elements belong to different groups."""


class RepParseError(EquibasisError, ValueError):
    """A representation string could not be parsed."""


class ConvergenceError(EquibasisError, RuntimeError):
    """The iterative nullspace solver did not reach its tolerance.

    ``loss`` holds the final value of the objective, ``iterations`` the number
    of gradient steps taken.
    """

    def __init__(self, message, loss=None, iterations=None):
        super().__init__(message)
        self.loss = loss
        self.iterations = iterations


class SolverError(EquibasisError, RuntimeError):
    """A block subproblem failed; ``block`` names the offending term."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class BasisFormatError(EquibasisError, ValueError):
    """An EQB1 basis file is malformed."""
