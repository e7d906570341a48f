import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procrustes_embed.datasets import gen_cylinder, gen_plane
from procrustes_embed.embed_gp import embed_gp
from procrustes_embed.errors import InvalidInput
from procrustes_embed.measures import lower_bound_N, measure_R, measure_RN
from procrustes_embed.neighborhoods import NeighborhoodGraph, knn_graph
from procrustes_embed.numerics import haar_orthogonal, make_rng
from procrustes_embed.procrustes import statistic
from procrustes_embed.refine import refine, refine_step


@pytest.fixture(scope="module")
def flat():
    ds = gen_plane(400, rng=0)
    return ds, knn_graph(ds.X, 10)


class TestRefineStep:
    def test_fixed_point(self, flat, rng):
        ds, g = flat
        Y = ds.Z @ haar_orthogonal(2, rng).T + [3.0, -1.0]
        assert np.abs(refine_step(ds.X, Y, g) - Y).max() <= 1e-10

    def test_single_neighborhood_reaches_lower_bound(self, rng):
        # complete graph: every neighborhood holds all points, so all fits coincide
        n = 12
        X = rng.standard_normal((n, 3)) * [3.0, 2.0, 0.5]
        g = knn_graph(X, n - 1)
        C = X - X.mean(axis=0)
        s = np.linalg.svd(C, compute_uv=False)
        pca_residual = (s[2:] ** 2).sum()
        P = np.linalg.svd(C)[2][:2].T
        Q = haar_orthogonal(2, rng)
        Y = refine_step(X, (C @ P) @ Q.T + 4.0, g)
        assert abs(statistic(X, Y) - pca_residual) <= 1e-8
        assert abs(lower_bound_N(X, g, 2) * (s ** 2).sum() - pca_residual) <= 1e-8
        # from any start the step stays above the PCA bound
        for _ in range(5):
            Y0 = rng.standard_normal((n, 2))
            G = statistic(X, refine_step(X, Y0, g))
            assert pca_residual - 1e-9 <= G <= statistic(X, Y0) + 1e-9

    def test_perturbed_plane_improves(self, flat, rng):
        ds, g = flat
        Y = ds.Z + 0.01 * rng.standard_normal(ds.Z.shape)
        assert measure_R(ds.X, refine_step(ds.X, Y, g), g) < measure_R(ds.X, Y, g)

    def test_uncovered_points_kept(self):
        X = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 1]], float)
        nb = (np.array([1, 2]), np.array([0, 2]), np.array([0, 1]), np.array([0, 1]))
        g = NeighborhoodGraph(4, nb, np.ones(4), k=2)
        Y = np.arange(8.0).reshape(4, 2)
        out = refine_step(X, Y, g)
        # point 3 belongs only to its own neighborhood, so it is still covered
        assert out.shape == (4, 2) and np.all(np.isfinite(out))

    def test_errors(self, flat):
        ds, g = flat
        with pytest.raises(InvalidInput):
            refine_step(ds.X, ds.Z[:-1], g)
        with pytest.raises(InvalidInput):
            refine_step(ds.X, np.zeros((400, 4)), g)


class TestRefine:
    def test_converged_immediately_on_optimum(self, flat):
        ds, g = flat
        _, trace = refine(ds.X, ds.Z, g)
        assert trace.stop_reason == "converged" and len(trace.iterations) == 2

    def test_perturbed_plane_ratio(self, flat, rng):
        ds, g = flat
        Y0 = ds.Z + 0.1 * rng.standard_normal(ds.Z.shape)
        Y, _ = refine(ds.X, Y0, g)
        assert measure_RN(ds.X, Y, g) <= 0.1 * measure_RN(ds.X, Y0, g)

    def test_random_start_ratio(self, flat):
        ds, g = flat
        Y0 = make_rng(99).uniform(0, 10, ds.Z.shape)
        Y, _ = refine(ds.X, Y0, g, max_iters=1000)
        assert measure_RN(ds.X, Y, g) <= 0.1 * measure_RN(ds.X, Y0, g)

    def test_trace_monotone_on_gp_output(self, swissroll, gp_swissroll):
        ds, g = swissroll
        Y, trace = refine(ds.X, gp_swissroll, g, max_iters=20)
        assert np.all(np.diff(trace.R) <= 0)
        assert measure_R(ds.X, Y, g) <= measure_R(ds.X, gp_swissroll, g)
        assert trace.R_N[-1] >= lower_bound_N(ds.X, g, 2) - 1e-12

    def test_never_worse_on_cylinder(self):
        ds = gen_cylinder(400, rng=3)
        g = knn_graph(ds.X, 12)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            Y0 = embed_gp(ds.X, g, 2).Y
        Y, trace = refine(ds.X, Y0, g, max_iters=50)
        assert measure_R(ds.X, Y, g) <= measure_R(ds.X, Y0, g)
        assert trace.stop_reason in ("converged", "non_decreasing", "max_iters")

    def test_rigid_motion_equivariance(self, rng):
        ds = gen_cylinder(200, rng=4)
        g = knn_graph(ds.X, 10)
        Y0 = ds.Z + 0.05 * rng.standard_normal(ds.Z.shape)
        Q, t = haar_orthogonal(2, rng), rng.standard_normal(2)
        Y, _ = refine(ds.X, Y0, g, max_iters=10)
        Ym, _ = refine(ds.X, Y0 @ Q.T + t, g, max_iters=10)
        assert np.abs(Ym - (Y @ Q.T + t)).max() <= 1e-8

    @settings(max_examples=10)
    @given(st.integers(0, 2 ** 32))
    def test_property_never_increases_r(self, seed):
        r = make_rng(seed)
        ds = gen_cylinder(80, rng=r)
        g = knn_graph(ds.X, 8)
        Y0 = r.standard_normal((80, 2))
        Y, trace = refine(ds.X, Y0, g, max_iters=30)
        assert measure_R(ds.X, Y, g) <= measure_R(ds.X, Y0, g) + 1e-12
        assert trace.iterations[0]["R"] == pytest.approx(measure_R(ds.X, Y0, g), rel=1e-12)
