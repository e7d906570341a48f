import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_sum_h, ising_optimum, pinv_eigh
from procrustes_embed import kernels
from procrustes_embed.datasets import gen_cylinder, gen_plane, gen_swissroll
from procrustes_embed.embed_psa import (FrameField, SaSchedule, _proposals, _quench,
                                        _weighted_adjacency, alignment_objective, alignment_rhs,
                                        embed_psa, objective_delta, pca_frames, sa_align,
                                        solve_embedding, sum_h_matrix)
from procrustes_embed.errors import AlignmentIncomplete, InvalidInput
from procrustes_embed.measures import measure_RN
from procrustes_embed.neighborhoods import NeighborhoodGraph, knn_graph
from procrustes_embed.numerics import haar_orthogonal, make_rng

needs_cython = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")


def graph_from_lists(nb):
    return NeighborhoodGraph(len(nb), tuple(np.asarray(x, dtype=np.intp) for x in nb),
                             np.ones(len(nb)), eps=1.0)


def random_graph(n, r):
    # a path plus two random extra neighbors per point, so it is connected
    out = []
    for i in range(n):
        extra = r.choice([j for j in range(n) if j != i], 2, replace=False).tolist()
        out.append(sorted(set(extra) | ({i - 1} if i else set())))
    return out


class TestObjective:
    def test_identical_frames(self, rng):
        g = knn_graph(rng.standard_normal((10, 3)), 3)
        A = np.broadcast_to(haar_orthogonal(3, rng)[:, :2], (10, 3, 2)).copy()
        assert alignment_objective(FrameField(A, g)) == 0.0

    def test_opposite_signs(self):
        g = graph_from_lists([[1], [0]])
        F = FrameField(np.array([[[1.0]], [[-1.0]]]), g)
        assert alignment_objective(F) == 8.0

    @given(st.integers(0, 2 ** 32))
    def test_delta_matches_recompute(self, seed):
        r = make_rng(seed)
        X = r.standard_normal((15, 3))
        g = knn_graph(X, 4)
        F = FrameField(haar_orthogonal(3, r, 15)[:, :, :2].copy(), g)
        i = int(r.integers(15))
        new = haar_orthogonal(3, r)[:, :2]
        before = alignment_objective(F)
        delta = objective_delta(F, i, new)
        F.frames[i] = new
        assert abs(alignment_objective(F) - before - delta) <= 1e-10 * max(1.0, before)


class TestProposals:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_orthogonal(self, d, rng):
        O = _proposals(d, 50, 0.3, 0.5, rng)
        assert np.allclose(np.swapaxes(O, 1, 2) @ O, np.eye(d), atol=1e-10)

    def test_tempered_steps_shrink(self, rng):
        small = _proposals(3, 200, 0.01, 0.0, rng)
        assert np.abs(small - np.eye(3)).max() < 0.1


class TestSaAlign:
    @pytest.mark.parametrize("backend,runs,need", [(None, 20, 18), ("python", 4, 4)])
    def test_ising_matches_exhaustive(self, backend, runs, need):
        hits = 0
        for seed in range(runs):
            r = make_rng(seed)
            n = int(r.integers(6, 13))
            if seed % 2 == 0:
                nb = [[j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)]
            else:
                nb = random_graph(n, r)
            signs = r.choice([-1.0, 1.0], n)[:, None, None]
            try:
                F = sa_align(np.ones((n, 1, 1)), graph_from_lists(nb), init=signs, rng=seed,
                             backend=backend)
            except AlignmentIncomplete as exc:
                F = exc.frames
            hits += abs(F.info["f_final"] - ising_optimum(nb)) < 1e-9
        assert hits >= need

    def test_ising_chain_ten(self):
        nb = [[j for j in (i - 1, i + 1) if 0 <= j < 10] for i in range(10)]
        signs = make_rng(3).choice([-1.0, 1.0], 10)[:, None, None]
        F = sa_align(np.ones((10, 1, 1)), graph_from_lists(nb), init=signs, rng=3)
        assert F.info["f_final"] == 0.0 == ising_optimum(nb)

    def test_aligned_init_returns_immediately(self, plane):
        ds, g = plane
        P = pca_frames(ds.X, g, 2)
        A = np.broadcast_to(P[0], P.shape).copy()
        F = sa_align(P, g, init=A, rng=0)
        assert F.info["f_final"] <= 1e-20 and F.info["trace"] == []

    def test_planar_from_random_frames(self, plane):
        ds, g = plane
        F = sa_align(pca_frames(ds.X, g, 2), g, init="random", rng=0)
        A = F.frames
        assert np.linalg.norm(A[:, None] - A[None], axis=(2, 3)).max() <= 1e-6
        # every frame spans the data plane
        normal = np.linalg.svd(ds.X - ds.X.mean(axis=0))[2][2]
        assert np.abs(np.einsum("a,iab->ib", normal, A)).max() <= 1e-12

    def test_never_worse_than_init(self):
        ds = gen_cylinder(200, rng=2)
        g = knn_graph(ds.X, 8)
        P = pca_frames(ds.X, g, 2)
        init = P @ haar_orthogonal(2, make_rng(0), 200)
        quick = SaSchedule(alpha=0.5, t_min_ratio=0.1, max_outer_iters=1, coverage=0.0)
        F = sa_align(P, g, quick, init=init, rng=1)
        assert F.info["f_final"] <= F.info["f_init"]

    def test_incomplete_carries_frames(self):
        ds = gen_cylinder(200, rng=2)
        g = knn_graph(ds.X, 8)
        sched = SaSchedule(alpha=0.5, t_min_ratio=0.1, max_outer_iters=1, alignment_tol=1e-9)
        with pytest.raises(AlignmentIncomplete) as exc:
            sa_align(pca_frames(ds.X, g, 2), g, sched, init="random", rng=0)
        F = exc.value.frames
        assert isinstance(F, FrameField) and F.frames.shape == (200, 3, 2)
        assert exc.value.coverage < 0.99

    def test_deterministic(self, plane):
        ds, g = plane
        P = pca_frames(ds.X, g, 2)
        a = sa_align(P, g, init="random", rng=5).frames
        b = sa_align(P, g, init="random", rng=5).frames
        assert np.array_equal(a, b)

    def test_bad_schedule(self):
        with pytest.raises(InvalidInput):
            SaSchedule(alpha=1.0)
        with pytest.raises(InvalidInput):
            SaSchedule(t_min_ratio=2.0)

    def test_bad_backend(self, plane):
        ds, g = plane
        with pytest.raises(InvalidInput):
            sa_align(pca_frames(ds.X, g, 2), g, init="random", backend="fortran")


class TestQuench:
    @settings(max_examples=15)
    @given(st.integers(0, 2 ** 32))
    def test_never_increases(self, seed):
        r = make_rng(seed)
        ds = gen_cylinder(60, rng=r)
        g = knn_graph(ds.X, 6)
        P = pca_frames(ds.X, g, 2)
        frames = P @ haar_orthogonal(2, r, 60)
        F = FrameField(frames.copy(), g)
        before = alignment_objective(F)
        mask = (r.random(60) < 0.8).astype(np.uint8)
        f, _ = _quench(frames, P, g, _weighted_adjacency(g), mask, 50)
        assert f <= before + 1e-12
        assert np.array_equal(frames[mask == 0], F.frames[mask == 0])
        # frames stay in P_i O_i form
        O = np.swapaxes(P, 1, 2) @ frames
        assert np.allclose(np.swapaxes(O, 1, 2) @ O, np.eye(2), atol=1e-10)


def _csr(g):
    return _weighted_adjacency(g)


def _random_instance(r, n=40):
    X = r.standard_normal((n, 3))
    g = knn_graph(X, 5)
    frames = np.ascontiguousarray(haar_orthogonal(3, r, n)[:, :, :2])
    return g, frames


@needs_cython
class TestKernelEquivalence:
    @given(st.integers(0, 2 ** 32), st.floats(0.01, 20.0))
    def test_sa_sweep(self, seed, T):
        r = make_rng(seed)
        g, frames = _random_instance(r)
        ptr, idx, w = _csr(g)
        m = 200
        picks = r.integers(0, g.n, m).astype(np.intp)
        props = _proposals(2, m, 0.5, 0.2, r)
        u = r.uniform(size=m)
        a, b = frames.copy(), frames.copy()
        ra = kernels.sa_sweep(a, ptr, idx, w, picks, props, u, T)
        rb = kernels.python_sa_sweep(b, ptr, idx, w, picks, props, u, T)
        assert ra[0] == rb[0]
        assert np.abs(a - b).max() <= 1e-12

    @given(st.integers(0, 2 ** 32), st.floats(0.01, 20.0))
    def test_wolff_sweep(self, seed, T):
        r = make_rng(seed)
        g, frames = _random_instance(r)
        ptr, idx, w = _csr(g)
        m = 30
        movable = (r.random(g.n) < 0.8).astype(np.uint8)
        movable[0] = 1
        seeds = r.choice(np.flatnonzero(movable), m).astype(np.intp)
        axes = r.standard_normal((m, 2))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        uniforms = r.uniform(size=(m, idx.size + 1))
        a, b = frames.copy(), frames.copy()
        ra = kernels.wolff_sweep(a, ptr, idx, w, movable, seeds, axes, uniforms, T)
        rb = kernels.python_wolff_sweep(b, ptr, idx, w, movable, seeds, axes, uniforms, T)
        assert ra == rb
        assert np.abs(a - b).max() <= 1e-12


@pytest.mark.parametrize("wolff", [kernels.wolff_sweep, kernels.python_wolff_sweep])
def test_wolff_reflects_aligned_cluster_whole(wolff, rng):
    g, _ = _random_instance(rng)
    ptr, idx, w = _csr(g)
    A = np.ascontiguousarray(np.broadcast_to(haar_orthogonal(3, rng)[:, :2], (g.n, 3, 2)))
    u = np.array([[1.0, 0.0]])
    # zero uniforms: every aligned bond joins, so the connected graph flips as one
    acc, size = wolff(A, ptr, idx, w, np.ones(g.n, np.uint8), np.array([0], np.intp), u,
                      np.zeros((1, idx.size + 1)), 1.0)
    assert (acc, size) == (1, g.n)
    assert alignment_objective(FrameField(A, g)) < 1e-24


class TestSolveEmbedding:
    def test_dense_pinv_oracle(self, rng):
        n = 8
        X = rng.standard_normal((n, 3))
        g = knn_graph(X, 3)
        frames = haar_orthogonal(3, rng, n)[:, :, :2]
        S = dense_sum_h([nb.tolist() for nb in g.neighbors])
        assert np.allclose(sum_h_matrix(g).toarray(), S)
        rhs = np.zeros((n, 2))
        for i in range(n):
            mem = g.members(i)
            Xi = X[mem] - X[mem].mean(axis=0)
            rhs[mem] += Xi @ frames[i]
        assert np.allclose(alignment_rhs(X, g, frames), rhs)
        assert np.allclose(solve_embedding(X, g, frames), pinv_eigh(S) @ rhs, atol=1e-7)

    def test_true_planar_frames(self, plane):
        ds, g = plane
        # the plane's Jacobian is its orthonormal tangent frame, the same at every point
        frames = ds.jacobians
        Y = solve_embedding(ds.X, g, frames)
        assert measure_RN(ds.X, Y, g) <= 1e-8

    def test_rotation_equivariance(self, rng):
        ds = gen_cylinder(150, rng=1)
        g = knn_graph(ds.X, 8)
        frames = pca_frames(ds.X, g, 2)
        O = haar_orthogonal(2, rng)
        Y = solve_embedding(ds.X, g, frames)
        YO = solve_embedding(ds.X, g, frames @ O)
        assert np.abs(YO - Y @ O).max() <= 1e-8

    def test_stationarity(self, rng):
        ds = gen_swissroll(300, rng=2)
        g = knn_graph(ds.X, 10)
        frames = pca_frames(ds.X, g, 2)
        Y = solve_embedding(ds.X, g, frames)
        b = alignment_rhs(ds.X, g, frames)
        grad = (2.0 / g.n) * (b - sum_h_matrix(g) @ Y)
        assert np.linalg.norm(grad) <= 1e-6 * np.linalg.norm(b)

    def test_deterministic(self, plane):
        ds, g = plane
        frames = pca_frames(ds.X, g, 2)
        assert np.array_equal(solve_embedding(ds.X, g, frames), solve_embedding(ds.X, g, frames))


class TestEmbedPsa:
    def test_planar(self, plane):
        ds, g = plane
        res = embed_psa(ds.X, g, 2, rng=0)
        assert measure_RN(ds.X, res.Y, g) <= 1e-6
        assert res.info["alignment_complete"]

    def test_planar_random_init(self, plane):
        ds, g = plane
        res = embed_psa(ds.X, g, 2, rng=0, init="random")
        assert measure_RN(ds.X, res.Y, g) <= 1e-6

    def test_swissroll_small(self):
        # rng=1 gives a sample whose 10-NN graph has no shortcut edges across the roll
        ds = gen_swissroll(400, rng=1)
        g = knn_graph(ds.X, 10)
        res = embed_psa(ds.X, g, 2, rng=1)
        assert measure_RN(ds.X, res.Y, g) <= 0.05
        assert res.info["f_final"] <= res.info["f_init"]

    def test_deterministic(self, plane):
        ds, g = plane
        a = embed_psa(ds.X, g, 2, rng=7, init="random", chains=2)
        b = embed_psa(ds.X, g, 2, rng=7, init="random", chains=2)
        assert np.array_equal(a.Y, b.Y)
        assert len(a.info["chains"]) == 2

    def test_select_by_objective(self, plane):
        ds, g = plane
        res = embed_psa(ds.X, g, 2, rng=1, init="random", chains=2, select="f")
        assert res.info["f_final"] == min(c["f_final"] for c in res.info["chains"])

    def test_invalid(self, plane):
        ds, g = plane
        with pytest.raises(InvalidInput):
            embed_psa(ds.X, g, 4)
        with pytest.raises(InvalidInput):
            embed_psa(ds.X, g, 2, select="size")
