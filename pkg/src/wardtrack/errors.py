"""Exception types shared across the package."""


class ExtentError(ValueError):
    """A point or cell falls outside the ground grid."""


class ShapeError(ValueError):
    """Array dimensions do not match what the operation expects."""


class StructureError(ValueError):
    """A graph violates a structural precondition (e.g. contains a cycle)."""


class ValidationError(ValueError):
    """A scene, script or config violates its invariants."""


class FormatError(ValueError):
    """A record file is malformed or has the wrong format version.

    ``path`` and ``line`` point at the offending input when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class ConsistencyError(RuntimeError):
    """An internal invariant was violated; indicates a pipeline bug."""
