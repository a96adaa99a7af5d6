"""Exception hierarchy shared by all modules."""


class FrechetMPError(Exception):
    """Base class for every error raised by the package."""


class GradeError(FrechetMPError, ValueError):
    """A seminorm grade index outside 1..n_max."""


class FamilyMismatch(FrechetMPError, ValueError):
    """Two vectors (or paths) built on different seminorm families."""


class NonFiniteError(FrechetMPError, ArithmeticError):
    """A functional or map returned NaN/inf where a finite value is required."""


class EmptySampleError(FrechetMPError, ValueError):
    pass


class LinearityError(FrechetMPError, ValueError):
    """A handle passed as linear failed the additivity spot check."""


class MissingGradient(FrechetMPError, ValueError):
    pass


class PathError(FrechetMPError, ValueError):
    """Invalid path construction or incompatible paths."""


class PreconditionError(FrechetMPError, ValueError):
    """An operation's documented precondition does not hold."""


class EpsilonCritical(FrechetMPError):
    """No near-maximal node admits a descent direction with pairing < -eps.

    Raised by the deformation step; the caller is expected to record the
    near-critical node instead of deforming.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class C1Violation(FrechetMPError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnknownProblem(FrechetMPError, KeyError):
    pass
