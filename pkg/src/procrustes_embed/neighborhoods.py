"""k-NN and epsilon-ball neighborhood graphs.

A neighborhood ``X_i`` is the center ``x_i`` followed by its neighbors in
stored order. The center is not part of ``neighbors[i]``; it is prepended
whenever a neighborhood is materialized (:meth:`NeighborhoodGraph.members`).
All measures and algorithms in the package depend on that convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import InvalidInput, IsolatedPoints
from .numerics import as_matrix

# brute force below this many points, KD-tree above (identical graphs)
BRUTE_FORCE_MAX_N = 3000
_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class NeighborhoodGraph:
    n: int
    neighbors: tuple
    radii: np.ndarray
    k: int | None = None
    eps: float | None = None

    @property
    def r_max(self) -> float:
        return float(self.radii.max()) if self.n else 0.0

    @property
    def param(self):
        return {"k": self.k} if self.k is not None else {"eps": self.eps}

    def members(self, i: int) -> np.ndarray:
        """Indices of ``X_i``: the center first, then its neighbors."""
        if not 0 <= i < self.n:
            raise InvalidInput(f"index {i} out of range [0, {self.n})")
        return np.concatenate(([i], self.neighbors[i])).astype(np.intp)

    @cached_property
    def sizes(self) -> np.ndarray:
        """Number of rows of each ``X_i`` (neighbors + center)."""
        return np.array([len(nb) + 1 for nb in self.neighbors], dtype=np.intp)

    @cached_property
    def groups(self):
        """Neighborhoods bucketed by size, for batched linear algebra.

        Returns a list of ``(centers, members)`` pairs where ``members`` is an
        ``(m, size)`` index array whose rows are :meth:`members` of ``centers``.
        k-NN graphs give a single bucket.
        """
        out = []
        for size in np.unique(self.sizes):
            centers = np.flatnonzero(self.sizes == size)
            mem = np.empty((centers.size, size), dtype=np.intp)
            mem[:, 0] = centers
            for r, c in enumerate(centers):
                mem[r, 1:] = self.neighbors[c]
            out.append((centers, mem))
        return out

    @cached_property
    def adjacency(self) -> csr_matrix:
        """Directed 0/1 adjacency, row ``i`` marks ``neighbors[i]``."""
        rows = np.repeat(np.arange(self.n), self.sizes - 1)
        cols = np.concatenate(self.neighbors) if self.n else np.zeros(0, int)
        return csr_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def components(self):
        """(count, labels) of weakly connected components."""
        ncomp, labels = connected_components(self.adjacency, directed=True, connection="weak")
        return ncomp, labels

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "eps": self.eps,
                "neighbors": [nb.tolist() for nb in self.neighbors],
                "radii": [float(r) for r in self.radii],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "NeighborhoodGraph":
        data = json.loads(text)
        nbrs = tuple(np.asarray(nb, dtype=np.intp) for nb in data["neighbors"])
        return cls(len(nbrs), nbrs, np.asarray(data["radii"], float), data.get("k"), data.get("eps"))


def _finish(X, neighbors, k=None, eps=None):
    neighbors = tuple(np.asarray(nb, dtype=np.intp) for nb in neighbors)
    radii = np.array(
        [np.sqrt(((X[nb] - X[i]) ** 2).sum(axis=1)).max() for i, nb in enumerate(neighbors)]
    ) if neighbors else np.zeros(0)
    return NeighborhoodGraph(len(neighbors), neighbors, radii, k, eps)


def _stable_order(dist_row, idx):
    # sort by distance, ties -> lower index
    order = np.lexsort((idx, dist_row))
    return idx[order]


def _knn_brute(X, k, chunk=512):
    n = X.shape[0]
    out = []
    for start in range(0, n, chunk):
        D = cdist(X[start:start + chunk], X)
        for r in range(D.shape[0]):
            i = start + r
            D[r, i] = np.inf
            order = np.argsort(D[r], kind="stable")
            out.append(order[:k])
    return out


def _knn_tree(X, k):
    n = X.shape[0]
    tree = cKDTree(X)
    dist, idx = tree.query(X, k=min(k + 2, n))
    out = []
    for i in range(n):
        j = idx[i][idx[i] != i]
        d = np.sqrt(((X[j] - X[i]) ** 2).sum(axis=1))
        order = np.lexsort((j, d))
        j, d = j[order], d[order]
        kth = d[k - 1]
        complete = j.size == n - 1
        if not complete and (j.size == k or d[k] <= kth * (1 + _TIE_RTOL)):
            # points tied with the k-th distance may be missing; gather them all
            cand = np.asarray(tree.query_ball_point(X[i], kth * (1 + 1e-9)), dtype=np.intp)
            cand = cand[cand != i]
            dc = np.sqrt(((X[cand] - X[i]) ** 2).sum(axis=1))
            j = _stable_order(dc, cand)
        out.append(j[:k])
    return out


def knn_graph(X, k: int, method: str = "auto") -> NeighborhoodGraph:
    """k nearest neighbors of every point, excluding the point itself.

    Distance ties are broken by the lower index. ``method`` is ``"brute"``,
    ``"tree"`` or ``"auto"`` (brute force up to ``BRUTE_FORCE_MAX_N`` points).
    """
    X = as_matrix(X, "X")
    n = X.shape[0]
    if not 1 <= k < n:
        raise InvalidInput(f"need 1 <= k < n={n}, got k={k}")
    if method == "auto":
        method = "brute" if n <= BRUTE_FORCE_MAX_N else "tree"
    if method == "brute":
        nbrs = _knn_brute(X, k)
    elif method == "tree":
        nbrs = _knn_tree(X, k)
    else:
        raise InvalidInput(f"unknown method {method!r}")
    return _finish(X, nbrs, k=k)


def eps_graph(X, eps: float) -> NeighborhoodGraph:
    """All points within distance ``eps`` (inclusive) of each point.

    Raises
    ------
    IsolatedPoints
        If any point has no neighbor; the exception lists them.
    """
    X = as_matrix(X, "X")
    if not eps > 0:
        raise InvalidInput("eps must be positive")
    tree = cKDTree(X)
    cands = tree.query_ball_point(X, eps * (1 + 1e-9))
    nbrs, isolated = [], []
    for i, c in enumerate(cands):
        c = np.asarray(c, dtype=np.intp)
        c = c[c != i]
        d = np.sqrt(((X[c] - X[i]) ** 2).sum(axis=1))
        keep = d <= eps
        c, d = c[keep], d[keep]
        if c.size == 0:
            isolated.append(i)
        nbrs.append(_stable_order(d, c))
    if isolated:
        raise IsolatedPoints(isolated, eps)
    return _finish(X, nbrs, eps=eps)


def neighborhood_matrix(X, g: NeighborhoodGraph, i: int) -> np.ndarray:
    """Rows of ``X_i``: ``x_i`` followed by its neighbors."""
    X = np.asarray(X, dtype=float)
    return X[g.members(i)]


def density_report(g: NeighborhoodGraph, bins: int = 10) -> dict:
    """Radius statistics. Whether ``r_max`` is below the branch separation is left to the caller."""
    r = g.radii
    nb = min(bins, np.unique(r).size)
    counts, edges = np.histogram(r, bins=nb)
    return {
        "r_max": float(r.max()),
        "r_mean": float(r.mean()),
        "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
    }
