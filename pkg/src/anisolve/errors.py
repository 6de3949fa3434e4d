"""Exception hierarchy shared by all solver modules."""


class AnisolveError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(AnisolveError, ValueError):
    """Fields or grids are not conformable."""


class RangeError(AnisolveError, IndexError):
    """An index lies outside the extended (halo + padding) range."""


class ParameterError(AnisolveError, ValueError):
    """A physical or numerical parameter is out of its admissible range."""


class SingularMatrixError(AnisolveError, ArithmeticError):
    """Zero pivot met during a tridiagonal elimination."""


class BreakdownError(AnisolveError, ArithmeticError):
    """A Krylov scalar that must be positive was not (loss of definiteness)."""


class CapacityError(AnisolveError, MemoryError):
    """A requested dense object exceeds the configured size cap."""


class TopologyError(AnisolveError, ValueError):
    """Rank grid or local shapes are inconsistent."""


class ExchangeError(AnisolveError, RuntimeError):
    """A message could not be delivered or received in time."""


class HarnessError(AnisolveError, RuntimeError):
    """A simulated rank failed."""

    def __init__(self, rank, cause):
        super().__init__(f"rank {rank} failed: {cause!r}")
        self.rank = rank
        self.cause = cause
