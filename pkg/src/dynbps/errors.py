"""Exception types shared across the library."""


class DynbpsError(Exception):
    """Base class for all library-specific errors."""


class MeshParseError(DynbpsError):
    """Raised when an OBJ or STL payload cannot be parsed."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ContainmentError(DynbpsError):
    """Inside/outside queries require a watertight mesh."""


class GridMismatchError(DynbpsError):
    """An encoding's basis grid does not match the expected one."""


class PoseError(DynbpsError):
    """A rotation matrix failed orthonormality validation."""
