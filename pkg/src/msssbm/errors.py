"""Exception types raised across the package.

All of them derive from ``ValueError`` so callers that only care about
"bad input" can catch that, while the CLI maps them to exit code 2.
"""


class MsssbmError(ValueError):
    """Base class for input and model errors."""


# netbuild
class ZeroVarianceColumn(MsssbmError):
    def __init__(self, window: int, column: int):
        super().__init__(f"column {column} is constant within window {window}")
        self.window = window
        self.column = column


class WindowTooLong(MsssbmError):
    pass


class DegenerateTies(MsssbmError):
    pass


class EmptySequence(MsssbmError):
    pass


class EmptyGrid(MsssbmError):
    pass


# community
class EmptyGraph(MsssbmError):
    pass


class EmptyLayer(MsssbmError):
    pass


class LayerMismatch(MsssbmError):
    pass


class NonConsensus(MsssbmError):
    pass


class KTooLarge(MsssbmError):
    pass


class LengthMismatch(MsssbmError):
    pass


# blockmodel
class EmptyBlock(MsssbmError):
    pass


class SingletonDiagonal(MsssbmError):
    pass


class ThetaOnBoundary(MsssbmError):
    pass


class DimensionMismatch(MsssbmError):
    pass


# dynstate
class TooFewObservations(MsssbmError):
    pass


class DegenerateState(MsssbmError):
    pass


class NonTriangularDimension(MsssbmError):
    pass


class EmConvergenceFailure(UserWarning):
    """Baum-Welch hit its iteration cap before meeting the tolerance."""


# synth / metrics
class ScheduleMismatch(MsssbmError):
    pass


class ShapeMismatch(MsssbmError):
    pass


class SingleCluster(MsssbmError):
    pass
