"""Exception types raised across the package."""


class ProcrustesEmbedError(Exception):
    """Base class for all package errors."""


class InvalidInput(ProcrustesEmbedError, ValueError):
    pass


class DegenerateInput(ProcrustesEmbedError, ValueError):
    """Every neighborhood has (numerically) zero spread."""


class DegenerateEmbedding(ProcrustesEmbedError, ValueError):
    """The embedded configuration has zero spread, so no scale is defined."""


class IsolatedPoints(ProcrustesEmbedError, ValueError):
    """Some points have no neighbors inside the requested radius."""

    def __init__(self, indices, eps):
        self.indices = list(indices)
        self.eps = eps
        shown = self.indices[:10]
        more = "" if len(self.indices) <= 10 else f" (+{len(self.indices) - 10} more)"
        super().__init__(
            f"{len(self.indices)} point(s) have no neighbor within eps={eps}: {shown}{more}"
        )


class SolverDiverged(ProcrustesEmbedError, RuntimeError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (relative residual {residual:.3e})")


class AlignmentIncomplete(ProcrustesEmbedError, RuntimeError):
    """Simulated annealing stopped before the aligned cluster covered enough points.

    The best frame field found is attached as ``frames`` so callers can still
    solve for an embedding.
    """

    def __init__(self, frames, coverage, target):
        self.frames = frames
        self.coverage = coverage
        self.target = target
        super().__init__(
            f"largest aligned cluster covers {coverage:.1%} of points (target {target:.0%})"
        )


class ComponentWarning(UserWarning):
    """The neighborhood graph is disconnected; components are laid out side by side."""


class UnderdeterminedStepWarning(UserWarning):
    """A greedy step was placed from fewer than d+1 anchor points."""
