"""Iterative refinement of an existing embedding.

Each sweep fits a rotation ``A_i`` to every neighborhood, sets its
translation to the least-squares ``b_i = mean_j (x_j - A_i y_j)``, and then
moves every point to ``mean_i A_i'(x_j - b_i)`` over the neighborhoods that
contain it. All updates in a sweep read the previous ``Y`` (Jacobi style).
The sweep is not guaranteed to decrease ``R``; :func:`refine` keeps the best
iterate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .measures import DEGENERATE_TOL
from .neighborhoods import NeighborhoodGraph
from .numerics import as_matrix
from .procrustes import batch_terms

# R_N below this is round-off: the input is already an exact solution
EXACT_RN = 1e-12


@dataclass
class RefineTrace:
    iterations: list = field(default_factory=list)
    stop_reason: str = ""
    uncovered: np.ndarray | None = None

    @property
    def R(self):
        return np.array([it["R"] for it in self.iterations])

    @property
    def R_N(self):
        return np.array([it["R_N"] for it in self.iterations])


def _check(X, Y, g):
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0] or g.n != X.shape[0]:
        raise InvalidInput("X, Y and graph sizes differ")
    if Y.shape[1] > X.shape[1]:
        raise InvalidInput("embedding dimension exceeds input dimension")
    return X, Y


def _sweep(X, Y, g):
    """One Jacobi sweep from ``Y``.

    Returns the new embedding and the measures ``(R, R_N)`` of the input ``Y``
    (they come for free from the same rotations).
    """
    n, d = Y.shape
    acc = np.zeros((n, d))
    cnt = np.zeros(n)
    G = np.zeros(n)
    hx2 = np.zeros(n)
    for centers, mem in g.groups:
        Xs, Ys = X[mem], Y[mem]
        t = batch_terms(Xs, Ys)
        A = t["A"]
        G[centers], hx2[centers] = t["G"], t["hx2"]
        # b_i = mean_j (x_j - A_i y_j)
        b = Xs.mean(axis=1) - np.einsum("mqd,md->mq", A, Ys.mean(axis=1))
        # contribution A_i'(x_j - b_i) for every member j of neighborhood i
        contrib = np.einsum("mqd,mkq->mkd", A, Xs - b[:, None, :])
        np.add.at(acc, mem.ravel(), contrib.reshape(-1, d))
        np.add.at(cnt, mem.ravel(), 1.0)
    covered = cnt > 0
    Ynew = Y.copy()
    Ynew[covered] = acc[covered] / cnt[covered, None]
    keep = hx2 >= DEGENERATE_TOL
    RN = float(np.mean(G[keep] / hx2[keep])) if keep.any() else float("nan")
    return Ynew, float(G.mean()), RN, ~covered


def refine_step(X, Y, g: NeighborhoodGraph) -> np.ndarray:
    """One refinement sweep. Points in no neighborhood keep their coordinates."""
    X, Y = _check(X, Y, g)
    return _sweep(X, Y, g)[0]


def refine(X, Y0, g: NeighborhoodGraph, rel_tol: float = 1e-6, max_iters: int = 200):
    """Repeat :func:`refine_step` until ``R`` stops decreasing.

    Stops when the relative decrease of ``R`` falls below ``rel_tol``
    (``converged``), when ``R`` goes up (``non_decreasing``; the iterate
    before the increase is returned) or after ``max_iters`` sweeps. An
    increase while ``R_N`` is at round-off level counts as converged.

    Returns
    -------
    Y : ndarray
        Best embedding seen; ``R(X, Y) <= R(X, Y0)``.
    trace : RefineTrace
        Entry 0 describes ``Y0``; entry ``t`` the result of sweep ``t``.
    """
    X, Y = _check(X, Y0, g)
    Y = Y.copy()
    trace = RefineTrace()
    Ynext, R, RN, uncovered = _sweep(X, Y, g)
    RN_cur = RN
    trace.uncovered = uncovered
    trace.iterations.append({"iter": 0, "R": R, "R_N": RN, "max_displacement": 0.0})
    for it in range(1, max_iters + 1):
        Yafter, Rn, RNn, _ = _sweep(X, Ynext, g)
        disp = float(np.sqrt(((Ynext - Y) ** 2).sum(axis=1)).max())
        if Rn > R:
            if RN_cur <= EXACT_RN:
                trace.iterations.append({"iter": it, "R": Rn, "R_N": RNn, "max_displacement": disp})
                trace.stop_reason = "converged"
            else:
                trace.stop_reason = "non_decreasing"
            return Y, trace
        trace.iterations.append({"iter": it, "R": Rn, "R_N": RNn, "max_displacement": disp})
        decrease = (R - Rn) / max(R, 1e-300)
        Y, R, RN_cur, Ynext = Ynext, Rn, RNn, Yafter
        if decrease < rel_tol:
            trace.stop_reason = "converged"
            return Y, trace
    trace.stop_reason = "max_iters"
    return Y, trace
