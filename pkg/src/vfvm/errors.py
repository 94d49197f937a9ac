"""Exception types shared across the package."""


class VfvmError(Exception):
    """Base class for all errors raised by vfvm."""


class DegenerateSimplex(VfvmError):
    def __init__(self, message="degenerate simplex", cell=None):
        if cell is not None:
            message = f"{message} (cell {cell})"
        super().__init__(message)
        self.cell = cell


class MeshError(VfvmError):
    """Invalid mesh topology or file contents."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RepairDiverged(VfvmError):
    pass


class MissingBoundaryMeasure(VfvmError):
    pass


class NotConverged(VfvmError):
    pass


class SingularMatrix(VfvmError):
    pass


class SingularJacobian(SingularMatrix):
    pass


class LinearSolveFailure(VfvmError):
    pass


class OutOfBounds(VfvmError):
    """A concentration left the open interval (0, 1)."""


class NewtonFailure(VfvmError):
    pass


class StepFloorReached(VfvmError):
    pass


class NegativeContribution(UserWarning):
    """Per-cell Voronoi contribution below zero (mesh not boundary conforming)."""
