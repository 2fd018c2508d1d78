"""Exception hierarchy shared by all sepkit modules."""


class SepkitError(Exception):
    """Base class for every error raised by sepkit."""


class InvalidBodyError(SepkitError, ValueError):
    """Vertex set is empty, malformed or not full-dimensional when required."""


class EmptyCellError(SepkitError):
    """A halfspace intersection (or LP feasible set) is empty."""


class UnboundedDirectionError(SepkitError):
    """A support LP is unbounded in the requested direction."""


class DegenerateCellError(SepkitError):
    """Vertex enumeration produced an inconsistent polytope."""


class GreatSubsphereError(SepkitError, ValueError):
    """Directional atoms do not span the ambient space."""


class AsymmetricBodyError(SepkitError, ValueError):
    """Facet measures are only defined here for centrally symmetric bodies."""


class SolverError(SepkitError):
    """An optimisation or root-finding routine failed to converge."""


class WindowError(SepkitError):
    """A sampled cell kept touching the simulation window after all doublings."""


class BudgetExceededError(SepkitError):
    """Rejection sampling ran out of draws before collecting enough samples."""


class ReplicationError(SepkitError, RuntimeError):
    """A Monte Carlo replication failed; ``index`` and the original ``cause`` are kept."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"replication {index} failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause

    def __reduce__(self):
        # survive the trip back from worker processes
        return (ReplicationError, (self.index, self.cause))
