"""Exception types shared across the package."""


class DegenerateInputError(ValueError):
    """Raised when an operating point has zero desired-signal power.

    Quantities normalised by the signal variance (gain, SDR, NLD) are
    undefined there; use the small-signal limit accessors instead.
    """


class NoSolutionError(RuntimeError):
    """The requested NF limit cannot be met.

    ``best_nf_db`` carries the lowest NF that was achievable, if known.
    """

    def __init__(self, message, best_nf_db=None):
        super().__init__(message)
        self.best_nf_db = best_nf_db


class RankError(ArithmeticError):
    """Normal matrix of a linear detector is numerically singular."""


class ConsistencyError(ArithmeticError):
    """A computed variance went negative beyond rounding slack."""
