"""Procrustes Subspaces Alignment (PSA).

Local PCA gives every neighborhood a frame ``P_i`` (q x d) that is right up
to an unknown orthogonal ``O_i``. Simulated annealing picks the ``O_i`` so
that neighboring frames ``A_i = P_i O_i`` agree, minimizing

    f = sum_i sum_{j in Neighbors(i)} |A_i - A_j|_F^2,

and the embedding is then the least-squares solution of
``(sum_i H_i) Y = sum_i H_i X A_i`` where ``H_i`` centers neighborhood ``i``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .embed_gp import EmbeddingResult, _separate_components, embed_gp
from .errors import AlignmentIncomplete, InvalidInput
from .neighborhoods import NeighborhoodGraph
from .numerics import as_matrix, haar_orthogonal, make_rng, solve_centered_spd

REORTHO_EVERY = 10_000
PROBE_MOVES = 100
TARGET_ACCEPT = 0.8
ALIGNED_F = 1e-20


@dataclass(frozen=True)
class SaSchedule:
    """Cooling schedule and stopping rules for :func:`sa_align`.

    ``t_init=None`` calibrates the start temperature so that about 80% of
    uphill probe moves are accepted. ``steps_per_temp=None`` means 20 moves
    per movable frame. ``t_min_ratio`` sets ``t_min = t_min_ratio * t_init``.
    ``alignment_tol=None`` means ``0.3 * sqrt(2 d)``. Each temperature
    level also makes ``cluster_moves`` Wolff moves, which reflect a whole
    cluster of frames at once and so can dissolve reflection domain walls
    that single-frame moves cannot cross. After cooling, up to
    ``quench_sweeps`` monotone block updates settle the frames into the
    nearest local minimum.
    """

    t_init: float | None = None
    alpha: float = 0.95
    steps_per_temp: int | None = None
    t_min_ratio: float = 1e-4
    max_outer_iters: int = 5
    alignment_tol: float | None = None
    coverage: float = 0.99
    reflect_prob: float | None = None
    cluster_moves: int = 50
    quench_sweeps: int = 2000

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInput("alpha must lie in (0, 1)")
        if not 0.0 < self.t_min_ratio < 1.0:
            raise InvalidInput("t_min must be below t_init")


@dataclass
class FrameField:
    frames: np.ndarray
    graph: NeighborhoodGraph
    info: dict = field(default_factory=dict)


def pca_frames(X, g: NeighborhoodGraph, d: int) -> np.ndarray:
    """Local PCA frame ``P_i`` (q x d) of every neighborhood, stacked (n, q, d)."""
    X = as_matrix(X, "X")
    q = X.shape[1]
    P = np.zeros((g.n, q, d))
    for centers, mem in g.groups:
        Xs = X[mem]
        _, _, Vt = np.linalg.svd(Xs - Xs.mean(axis=1, keepdims=True), full_matrices=True)
        P[centers] = np.swapaxes(Vt[:, :d, :], 1, 2)
    return P


def procrustes_frames(X, Y, g: NeighborhoodGraph) -> np.ndarray:
    """Procrustes rotation ``A_i`` between every ``X_i`` and ``Y_i``."""
    from .procrustes import batch_terms
    X, Y = as_matrix(X, "X"), as_matrix(Y, "Y")
    A = np.zeros((g.n, X.shape[1], Y.shape[1]))
    for centers, mem in g.groups:
        A[centers] = batch_terms(X[mem], Y[mem])["A"]
    return A


def _polar(M):
    """Nearest matrices with orthonormal columns (batched)."""
    U, _, Vt = np.linalg.svd(M, full_matrices=False)
    return U @ Vt


def _weighted_adjacency(g: NeighborhoodGraph):
    """Symmetric weights ``w_ij = [j in N(i)] + [i in N(j)]`` as CSR arrays."""
    W = (g.adjacency + g.adjacency.T).tocsr()
    W.sort_indices()
    return W.indptr.astype(np.intp), W.indices.astype(np.intp), W.data.astype(float)


def alignment_objective(F) -> float:
    """``sum_i sum_{j in Neighbors(i)} |A_i - A_j|^2`` for a :class:`FrameField`."""
    return _objective(F.frames, F.graph)


def _objective(frames, g):
    adj = g.adjacency.tocoo()
    diff = frames[adj.row] - frames[adj.col]
    return float((diff * diff).sum())


def objective_delta(F, i: int, new_frame) -> float:
    """Change of the objective when frame ``i`` is replaced, in O(k q d)."""
    ptr, idx, w = _weighted_adjacency(F.graph)
    lo, hi = ptr[i], ptr[i + 1]
    S = np.tensordot(w[lo:hi], F.frames[idx[lo:hi]], axes=1)
    A = F.frames[i]
    N = np.asarray(new_frame, float)
    return float(w[lo:hi].sum() * ((N * N).sum() - (A * A).sum()) - 2.0 * ((N - A) * S).sum())


def aligned_cluster(frames, g: NeighborhoodGraph, tol: float) -> np.ndarray:
    """Mask of the largest set of frames connected by edges with ``|A_i - A_j| < tol``."""
    adj = g.adjacency.tocoo()
    dist = np.sqrt(((frames[adj.row] - frames[adj.col]) ** 2).sum(axis=(1, 2)))
    ok = dist < tol
    M = coo_matrix((np.ones(ok.sum()), (adj.row[ok], adj.col[ok])), shape=(g.n, g.n))
    _, labels = connected_components(M, directed=False)
    sizes = np.bincount(labels)
    return labels == np.argmax(sizes)


def _proposals(d, m, scale, reflect_prob, rng):
    """``m`` proposal matrices: a rotation shrunk toward the identity, sometimes reflected.

    The rotation is Haar-uniform on SO(d) with its rotation angles
    multiplied by ``scale`` (geodesic interpolation toward ``I``).
    """
    if d == 1:
        O = np.ones((m, 1, 1))
    elif d == 2:
        theta = scale * rng.uniform(-np.pi, np.pi, m)
        c, s = np.cos(theta), np.sin(theta)
        O = np.stack((np.stack((c, -s), -1), np.stack((s, c), -1)), -2)
    else:
        R = haar_orthogonal(d, rng, m)
        neg = np.linalg.det(R) < 0
        R[neg, :, 0] *= -1
        w, V = np.linalg.eig(R)
        ang = np.angle(w)
        O = (V * np.exp(1j * scale * ang)[:, None, :]) @ np.linalg.inv(V)
        O = _polar(O.real)
    flip = rng.uniform(size=m) < reflect_prob
    if flip.any():
        u = rng.standard_normal((int(flip.sum()), d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        F = np.eye(d) - 2.0 * u[:, :, None] * u[:, None, :]
        O[flip] = O[flip] @ F
    return np.ascontiguousarray(O)


def _calibrate_t0(frames, adj, movable, reflect_prob, rng):
    ptr, idx, w = adj
    d = frames.shape[2]
    ups = []
    picks = rng.choice(movable, PROBE_MOVES)
    props = _proposals(d, PROBE_MOVES, 1.0, max(reflect_prob, 0.5), rng)
    for i, O in zip(picks, props):
        lo, hi = ptr[i], ptr[i + 1]
        S = np.tensordot(w[lo:hi], frames[idx[lo:hi]], axes=1)
        A = frames[i]
        N = A @ O
        delta = w[lo:hi].sum() * ((N * N).sum() - (A * A).sum()) - 2.0 * ((N - A) * S).sum()
        if delta > 0:
            ups.append(delta)
    if not ups:
        return 1.0
    return -float(np.mean(ups)) / math.log(TARGET_ACCEPT)


def _kernels(backend):
    if backend is None:
        return kernels.sa_sweep, kernels.wolff_sweep
    if backend == "python":
        return kernels.python_sa_sweep, kernels.python_wolff_sweep
    if backend == "cython":
        if kernels.BACKEND != "cython":
            raise InvalidInput("compiled kernels are not available")
        return kernels.sa_sweep, kernels.wolff_sweep
    raise InvalidInput(f"unknown backend {backend!r}")


def _cluster_moves(frames, adj, mask, movable, m, T, rng, wolff):
    ptr, idx, w = adj
    d = frames.shape[2]
    seeds = np.ascontiguousarray(movable[rng.integers(0, movable.size, m)], dtype=np.intp)
    axes = rng.standard_normal((m, d))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    uniforms = rng.uniform(size=(m, idx.size + 1))
    return wolff(frames, ptr, idx, w, mask, seeds, axes, uniforms, T)


def _quench(frames, P, g, adj, mask, max_sweeps):
    """Monotone block updates ``A_i <- P_i polar(P_i' (W A + D A)_i)`` on movable frames.

    ``D + W`` is positive semidefinite, so each sweep cannot lower
    ``<A, W A>`` and hence cannot raise the objective.
    """
    ptr, idx, w = adj
    n, q, d = frames.shape
    W = csr_matrix((w, idx, ptr), shape=(n, n))
    deg = np.asarray(W.sum(axis=1)).ravel()
    Pt = np.swapaxes(P, 1, 2)
    sel = mask.astype(bool)
    f = _objective(frames, g)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        M = (W @ frames.reshape(n, -1)).reshape(n, q, d) + deg[:, None, None] * frames
        new = frames.copy()
        new[sel] = P[sel] @ _polar(Pt[sel] @ M[sel])
        f_new = _objective(new, g)
        if f_new >= f - 1e-13 * max(f, 1.0):
            if f_new < f:
                frames[:], f = new, f_new
            break
        frames[:], f = new, f_new
    # rounding to the consensus frame; exact when all P_i share one span
    cand = frames.copy()
    cand[sel] = P[sel] @ _polar(Pt[sel] @ _polar(frames.sum(axis=0)))
    f_cand = _objective(cand, g)
    if f_cand < f:
        frames[:], f = cand, f_cand
    return f, sweeps


def _anneal(frames, P, g, adj, movable, sched, rng, kern, trace, outer):
    n_mov = movable.size
    d = frames.shape[2]
    reflect_prob = sched.reflect_prob
    if reflect_prob is None:
        reflect_prob = 0.5 if d == 1 else 0.2
    t0 = sched.t_init if sched.t_init is not None else _calibrate_t0(frames, adj, movable, reflect_prob, rng)
    t_min = sched.t_min_ratio * t0
    steps = sched.steps_per_temp or 20 * n_mov
    sweep, wolff = kern
    ptr, idx, w = adj
    mask = np.zeros(g.n, dtype=np.uint8)
    mask[movable] = 1
    f = _objective(frames, g)
    best_f, best = f, frames.copy()
    T = t0
    while T > t_min:
        scale = T / t0
        done = 0
        accepted = 0
        while done < steps:
            m = min(REORTHO_EVERY, steps - done)
            picks = np.ascontiguousarray(movable[rng.integers(0, n_mov, m)], dtype=np.intp)
            props = _proposals(d, m, scale, reflect_prob, rng)
            u = rng.uniform(size=m)
            acc, _ = sweep(frames, ptr, idx, w, picks, props, u, T)
            accepted += acc
            done += m
            frames[:] = _polar(frames)
        mean_cluster = 0.0
        if sched.cluster_moves > 0:
            acc_c, size = _cluster_moves(frames, adj, mask, movable, sched.cluster_moves, T, rng,
                                         wolff)
            mean_cluster = size / acc_c if acc_c else 0.0
        f = _objective(frames, g)
        if f < best_f:
            best_f, best = f, frames.copy()
        trace.append({"outer": outer, "T": T, "f": f, "acceptance": accepted / steps,
                      "mean_cluster": mean_cluster})
        T *= sched.alpha
    frames[:] = best
    if sched.quench_sweeps > 0:
        best_f, sweeps = _quench(frames, P, g, adj, mask, sched.quench_sweeps)
        trace.append({"outer": outer, "T": 0.0, "f": best_f, "acceptance": 0.0,
                      "mean_cluster": 0.0, "quench_sweeps": sweeps})
    return best_f


def sa_align(P, g: NeighborhoodGraph, sched: SaSchedule | None = None, init=None, rng=None,
             backend=None) -> FrameField:
    """Align local frames by simulated annealing.

    Parameters
    ----------
    P : (n, q, d) array_like
        Local PCA frames.
    g : NeighborhoodGraph
    sched : SaSchedule, optional
    init : (n, q, d) array_like, "random" or None
        Starting frames. They are projected onto ``P_i O_i`` form. ``None``
        starts from ``P`` itself.
    rng : seed or Generator
    backend : {"cython", "python"}, optional
        Kernel implementation; defaults to the compiled one when available.

    Returns
    -------
    FrameField
        Best frames found; ``info`` holds the objective before and after,
        the aligned-cluster coverage and a per-temperature trace.

    Raises
    ------
    AlignmentIncomplete
        If the aligned cluster stays below ``sched.coverage``. The exception
        carries the best :class:`FrameField`.
    """
    sched = sched or SaSchedule()
    rng = make_rng(rng)
    kern = _kernels(backend)
    P = np.asarray(P, float)
    n, q, d = P.shape
    if n != g.n:
        raise InvalidInput("frame count differs from graph size")
    if isinstance(init, str) and init == "random":
        frames = P @ haar_orthogonal(d, rng, n)
    elif init is None:
        frames = P.copy()
    else:
        init = np.asarray(init, float)
        if init.shape != P.shape:
            raise InvalidInput("init frames have the wrong shape")
        frames = P @ _polar(np.swapaxes(P, 1, 2) @ init)
    frames = np.ascontiguousarray(frames)
    tol = sched.alignment_tol if sched.alignment_tol is not None else 0.3 * math.sqrt(2 * d)
    adj = _weighted_adjacency(g)
    f_init = _objective(frames, g)
    trace = []
    info = {"f_init": f_init, "trace": trace, "alignment_tol": tol}

    cluster = aligned_cluster(frames, g, tol)
    f = f_init
    outer = 0
    # round-off level: projecting the init onto P_i O_i form is not bit-exact
    if f_init > ALIGNED_F * n:
        movable = np.arange(n, dtype=np.intp)
        for outer in range(1, sched.max_outer_iters + 1):
            before = frames.copy()
            f_new = _anneal(frames, P, g, adj, movable, sched, rng, kern, trace, outer)
            if f_new > f:
                frames[:] = before
            else:
                f = f_new
            cluster = aligned_cluster(frames, g, tol)
            if cluster.mean() >= sched.coverage:
                break
            movable = np.flatnonzero(~cluster).astype(np.intp)
    info.update(f_final=f, coverage=float(cluster.mean()), outer_iters=outer,
                backend=kern[0].__module__.rsplit(".", 1)[-1])
    F = FrameField(frames, g, info)
    if cluster.mean() < sched.coverage:
        raise AlignmentIncomplete(F, float(cluster.mean()), sched.coverage)
    return F


def sum_h_matrix(g: NeighborhoodGraph):
    """Sparse ``sum_i H_i`` (n x n)."""
    rows, cols, vals = [], [], []
    for _, mem in g.groups:
        k = mem.shape[1]
        block = np.eye(k) - 1.0 / k
        rows.append(np.repeat(mem, k, axis=1).ravel())
        cols.append(np.tile(mem, (1, k)).ravel())
        vals.append(np.broadcast_to(block.ravel(), (mem.shape[0], k * k)).ravel())
    S = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(g.n, g.n))
    return S.tocsr()


def alignment_rhs(X, g: NeighborhoodGraph, frames) -> np.ndarray:
    """``sum_i H_i X A_i`` (n x d)."""
    n, d = g.n, frames.shape[2]
    out = np.zeros((n, d))
    for centers, mem in g.groups:
        Xs = X[mem]
        C = Xs - Xs.mean(axis=1, keepdims=True)
        np.add.at(out, mem.ravel(), (C @ frames[centers]).reshape(-1, d))
    return out


def solve_embedding(X, g: NeighborhoodGraph, F, tol: float = 1e-10) -> np.ndarray:
    """Least-squares embedding for fixed frames.

    Solves ``(sum H_i) Y = sum H_i X A_i`` by deflated conjugate gradients;
    each connected component gets its zero-mean minimum-norm solution and
    components are then laid side by side, ``2 r_max`` apart.
    """
    X = as_matrix(X, "X")
    frames = F.frames if isinstance(F, FrameField) else np.asarray(F, float)
    S = sum_h_matrix(g)
    b = alignment_rhs(X, g, frames)
    ncomp, labels = g.components
    Y = solve_centered_spd(lambda B: S @ B, b, tol=tol, labels=labels)
    if ncomp > 1:
        _separate_components(Y, labels, ncomp, 2.0 * g.r_max)
    return Y


def embed_psa(X, g: NeighborhoodGraph, d: int, sched: SaSchedule | None = None, rng=None,
              init="from-gp", chains: int = 1, select: str = "R", backend=None) -> EmbeddingResult:
    """PSA pipeline: local PCA, SA alignment, least-squares solve.

    ``init="from-gp"`` starts the annealing from the Procrustes rotations
    between each neighborhood and its greedy Procrustes embedding;
    ``"random"`` from randomly rotated PCA frames. With ``chains > 1``
    independent chains run from spawned seeds. ``select="R"`` keeps the
    chain whose solved embedding has the lowest ``R(X, Y)``; ``select="f"``
    keeps the lowest alignment objective. The two differ on surfaces such
    as the cylinder, where the best-aligned frames collapse the embedding.
    An incomplete alignment is not fatal here: it is recorded in
    ``info["alignment_complete"]``.
    """
    from .measures import measure_R

    X = as_matrix(X, "X")
    if not 1 <= d <= X.shape[1]:
        raise InvalidInput(f"need 1 <= d <= {X.shape[1]}")
    if select not in ("R", "f"):
        raise InvalidInput("select must be 'R' or 'f'")
    rng = make_rng(rng)
    P = pca_frames(X, g, d)
    if isinstance(init, str) and init == "from-gp":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            Ygp = embed_gp(X, g, d).Y
        init_frames = procrustes_frames(X, Ygp, g)
    else:
        init_frames = init
    best = None
    chain_info = []
    for seed in rng.spawn(chains):
        try:
            F = sa_align(P, g, sched, init_frames, seed, backend)
            complete = True
        except AlignmentIncomplete as exc:
            F = exc.frames
            complete = False
        Y = solve_embedding(X, g, F)
        R = measure_R(X, Y, g)
        chain_info.append({"f_final": F.info["f_final"], "R": R,
                           "coverage": F.info["coverage"], "complete": complete})
        score = R if select == "R" else F.info["f_final"]
        if best is None or score < best[0]:
            best = (score, F, complete, Y)
    _, F, complete, Y = best
    info = {
        "f_init": F.info["f_init"], "f_final": F.info["f_final"],
        "coverage": F.info["coverage"], "alignment_complete": complete,
        "chains": chain_info, "sa_trace": F.info["trace"], "frames": F,
    }
    return EmbeddingResult(Y, info)
