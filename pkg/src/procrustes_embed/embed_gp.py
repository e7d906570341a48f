"""Greedy Procrustes (GP) embedding.

One neighborhood is embedded by local PCA. Then, repeatedly, the unembedded
point with the most embedded neighbors is chosen; its neighborhood is fitted
onto the already embedded part of it and the remaining points are placed by
the inverse of that fit. Placed points never move.
"""
from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ComponentWarning, InvalidInput, UnderdeterminedStepWarning
from .neighborhoods import NeighborhoodGraph
from .numerics import as_matrix, make_rng, pca_projection


@dataclass
class EmbeddingResult:
    Y: np.ndarray
    info: dict = field(default_factory=dict)


def centroid_index(X) -> int:
    """Index of the point closest to the centroid (lowest index on ties)."""
    X = np.asarray(X, float)
    return int(np.argmin(((X - X.mean(axis=0)) ** 2).sum(axis=1)))


def _place(X, Y, anchors, new):
    """Embed ``new`` points from the rigid fit of the embedded ``anchors``."""
    Xa, Ya = X[anchors], Y[anchors]
    xbar, ybar = Xa.mean(axis=0), Ya.mean(axis=0)
    # fit x ~ A y + b, then invert: y = A'(x - xbar) + ybar
    U, _, Vt = np.linalg.svd((Xa - xbar).T @ (Ya - ybar), full_matrices=False)
    A = U @ Vt
    Y[new] = (X[new] - xbar) @ A + ybar


def embed_gp(X, g: NeighborhoodGraph, d: int, seed_index="center", rng=None) -> EmbeddingResult:
    """Greedy Procrustes embedding of ``X`` into ``d`` dimensions.

    Parameters
    ----------
    X : (n, q) array_like
    g : NeighborhoodGraph
    d : int
        Output dimension, ``d <= q``.
    seed_index : int, "center" or "random"
        First neighborhood. "center" picks the point nearest the centroid.
    rng : seed or Generator
        Only used when ``seed_index="random"``.

    Returns
    -------
    EmbeddingResult
        ``Y`` (n, d) and ``info`` with the seed, the step order, the number
        of components and any warnings raised.
    """
    X = as_matrix(X, "X")
    n, q = X.shape
    if g.n != n:
        raise InvalidInput(f"graph has {g.n} points, X has {n}")
    if not 1 <= d <= q:
        raise InvalidInput(f"need 1 <= d <= {q}")
    if seed_index == "center":
        seed = centroid_index(X)
    elif seed_index == "random":
        seed = int(make_rng(rng).integers(n))
    else:
        seed = int(seed_index)
        if not 0 <= seed < n:
            raise InvalidInput(f"seed index {seed} out of range")

    members = [g.members(i) for i in range(n)]
    # rev[u] = points whose neighbor list contains u
    rev = g.adjacency.T.tocsr()
    rev_ptr, rev_idx = rev.indptr, rev.indices
    embedded = np.zeros(n, dtype=bool)
    count = np.zeros(n, dtype=np.intp)
    comp_of = np.full(n, -1, dtype=np.intp)
    Y = np.zeros((n, d))
    heap = []
    steps = []
    warn_log = []

    def mark(points, comp):
        for u in points:
            embedded[u] = True
            comp_of[u] = comp
            for p in rev_idx[rev_ptr[u]:rev_ptr[u + 1]]:
                if not embedded[p]:
                    count[p] += 1
                    heapq.heappush(heap, (-count[p], p))

    def start_component(c, comp):
        mem = members[c]
        if mem.size >= 2:
            P, _ = pca_projection(X[mem], d)
            Y[mem] = (X[mem] - X[mem].mean(axis=0)) @ P
        steps.append(int(c))
        mark(mem, comp)

    ncomp = 0
    start_component(seed, ncomp)
    remaining = n - int(embedded.sum())
    while remaining > 0:
        stash = []
        chosen = None
        while heap:
            negc, p = heapq.heappop(heap)
            if embedded[p] or -negc != count[p]:
                continue
            if count[p] >= d + 1:
                chosen = p
                break
            stash.append((negc, p))
        center = None
        if chosen is None and stash:
            # an embedded neighborhood with enough anchors beats an underdetermined fit
            center = _embedded_center_with_gap(members, embedded, comp_of == ncomp, d + 1)
            if center is None:
                negc, chosen = min(stash)
                stash.remove((negc, chosen))
                msg = f"point {chosen} placed from {count[chosen]} anchor(s) (< d+1)"
                warn_log.append(msg)
                warnings.warn(msg, UnderdeterminedStepWarning, stacklevel=2)
        for item in stash:
            heapq.heappush(heap, item)

        if center is not None:
            mem = members[center]
        elif chosen is None:
            # no unembedded point lists an embedded neighbor; try an embedded
            # center whose neighborhood still has unembedded members
            in_comp = comp_of == ncomp
            center = _embedded_center_with_gap(members, embedded, in_comp, d + 1)
            if center is None:
                center = _embedded_center_with_gap(members, embedded, in_comp)
            if center is None:
                ncomp += 1
                rest = np.flatnonzero(~embedded)
                c = int(rest[centroid_index(X[rest])])
                msg = f"graph is disconnected; starting component {ncomp} at point {c}"
                warn_log.append(msg)
                warnings.warn(msg, ComponentWarning, stacklevel=2)
                start_component(c, ncomp)
                remaining = n - int(embedded.sum())
                continue
            mem = members[center]
        else:
            center = chosen
            mem = members[chosen]

        done = embedded[mem]
        new = mem[~done]
        _place(X, Y, mem[done], new)
        steps.append(int(center))
        mark(new, ncomp)
        remaining -= new.size

    if ncomp > 0:
        _separate_components(Y, comp_of, ncomp + 1, 2.0 * g.r_max)

    info = {"seed_index": seed, "steps": len(steps), "order": steps,
            "components": ncomp + 1, "warnings": warn_log}
    return EmbeddingResult(Y, info)


def _embedded_center_with_gap(members, embedded, in_comp, min_anchors=1):
    """Lowest embedded center with unembedded members and at least ``min_anchors`` embedded ones."""
    for c in np.flatnonzero(embedded & in_comp):
        done = embedded[members[c]]
        if not done.all() and done.sum() >= min_anchors:
            return int(c)
    return None


def _separate_components(Y, comp_of, ncomp, gap):
    """Shift components along the first axis so their bounding boxes are ``gap`` apart."""
    right = None
    for c in range(ncomp):
        sel = comp_of == c
        if right is not None:
            Y[sel, 0] += right + gap - Y[sel, 0].min()
        right = Y[sel, 0].max()
