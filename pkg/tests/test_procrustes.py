import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import direct_residual, procrustes_1d_brute, procrustes_grid
from procrustes_embed.errors import DegenerateEmbedding, InvalidInput
from procrustes_embed.numerics import haar_orthogonal, make_rng
from procrustes_embed.procrustes import apply, batch_terms, fit, fit_conformal, statistic

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def pairs(draw, max_k=8):
    k = draw(st.integers(1, max_k))
    q = draw(st.integers(1, 4))
    d = draw(st.integers(1, q))
    X = draw(arrays(np.float64, (k, q), elements=coords))
    Y = draw(arrays(np.float64, (k, d), elements=coords))
    return X, Y


class TestFit:
    def test_identity(self):
        X = np.array([[0, 0], [1, 0], [0, 1]], float)
        f = fit(X, X)
        assert np.allclose(f.A, np.eye(2)) and np.allclose(f.b, 0) and f.residual < 1e-15

    def test_exact_isometry(self, rng):
        X = rng.standard_normal((6, 3))
        R = haar_orthogonal(3, rng)
        t = rng.standard_normal(3)
        assert fit(X, (X - t) @ R).residual < 1e-12

    def test_1d_pair_residual_identity(self):
        X = np.array([[-0.5], [0.5]])
        Y = 2 * X
        assert np.isclose(fit(X, Y).residual, 0.5, atol=1e-15)
        assert np.isclose(procrustes_1d_brute(X, Y), 0.5, atol=1e-8)

    def test_grid_oracle(self):
        r = make_rng(5)
        for _ in range(3):
            X, Y = r.standard_normal((5, 3)), r.standard_normal((5, 2))
            G = fit(X, Y).residual
            assert abs(G - procrustes_grid(X, Y)) <= 1e-6 * G

    def test_reflection_allowed(self, rng):
        X = rng.standard_normal((5, 2))
        Y = X * [1, -1]
        f = fit(X, Y)
        assert f.residual < 1e-12 and np.linalg.det(f.A) < 0

    def test_errors(self):
        with pytest.raises(InvalidInput):
            fit(np.zeros((3, 2)), np.zeros((2, 2)))
        with pytest.raises(InvalidInput):
            fit(np.zeros((0, 2)), np.zeros((0, 2)))
        with pytest.raises(InvalidInput):
            fit(np.zeros((3, 1)), np.zeros((3, 2)))

    @given(pairs())
    def test_property_fit_invariants(self, pair):
        X, Y = pair
        f = fit(X, Y)
        d = Y.shape[1]
        assert np.allclose(f.A.T @ f.A, np.eye(d), atol=1e-10)
        assert f.residual >= 0
        scale = 1.0 + (X ** 2).sum() + (Y ** 2).sum()
        assert abs(f.residual - direct_residual(X, Y, f.A, f.b)) <= 1e-8 * scale

    @given(pairs(), st.integers(0, 2 ** 32))
    def test_property_rigid_invariance(self, pair, seed):
        X, Y = pair
        r = make_rng(seed)
        Q = haar_orthogonal(Y.shape[1], r)
        t = r.uniform(-5, 5, Y.shape[1])
        G = statistic(X, Y)
        scale = 1.0 + (X ** 2).sum() + (Y ** 2).sum()
        assert abs(G - statistic(X, Y @ Q.T + t)) <= 1e-8 * scale

    def test_zero_iff_isometric(self, rng):
        X = rng.standard_normal((6, 3))
        A = haar_orthogonal(3, rng)[:, :2]
        assert fit(X @ A @ A.T, X @ A).residual < 1e-12
        assert fit(X, X @ A).residual > 1e-3


class TestConformal:
    def test_pure_rescale(self, rng):
        X = rng.standard_normal((5, 2))
        f = fit_conformal(X, 3 * X)
        assert np.isclose(f.c, 1 / 3) and f.residual < 1e-12

    def test_zero_cross_covariance(self):
        X = np.array([[1, 0], [-1, 0], [0, 0]], float)
        Y = np.array([[0, 1], [0, 1], [0, -2]], float)
        f = fit_conformal(X, Y)
        assert f.c == 0.0
        assert np.isclose(f.residual, 2.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateEmbedding):
            fit_conformal(np.eye(3), np.ones((3, 2)))

    def test_uncentered_flag(self, rng):
        X = rng.standard_normal((6, 3))
        Y = rng.standard_normal((6, 2)) + 4
        literal = fit_conformal(X, Y, centered_scale=False)
        centered = fit_conformal(X, Y)
        assert literal.c < centered.c
        assert centered.residual <= literal.residual
        assert np.isclose(literal.residual, direct_residual(X, Y, literal.A, literal.b, literal.c))

    @given(pairs())
    def test_property_relaxation(self, pair):
        X, Y = pair
        if ((Y - Y.mean(axis=0)) ** 2).sum() <= 0:
            return
        fc = fit_conformal(X, Y)
        scale = 1.0 + (X ** 2).sum() + (Y ** 2).sum()
        assert fc.c >= 0
        assert fc.residual <= fit(X, Y).residual + 1e-9 * scale
        assert abs(fc.residual - direct_residual(X, Y, fc.A, fc.b, fc.c)) <= 1e-8 * scale


class TestApply:
    def test_identity(self, rng):
        Y = rng.standard_normal((4, 2))
        f = fit(Y, Y)
        assert np.allclose(apply(f, Y), Y)

    def test_reproduces_isometric_x(self, rng):
        X = rng.standard_normal((6, 3))
        Y = (X - 1.5) @ haar_orthogonal(3, rng)
        assert np.allclose(apply(fit(X, Y), Y), X, atol=1e-10)

    def test_refit_idempotent(self, rng):
        X, Y = rng.standard_normal((7, 3)), rng.standard_normal((7, 2))
        f = fit(X, Y)
        # X'H Xhat = U L U' is symmetric PSD, so the identity is the optimal refit
        assert np.isclose(fit(X, apply(f, Y)).residual, f.residual, rtol=1e-8)

    def test_dimension_mismatch(self, rng):
        f = fit(rng.standard_normal((4, 3)), rng.standard_normal((4, 2)))
        with pytest.raises(InvalidInput):
            apply(f, np.zeros((4, 3)))


def test_batch_terms_match_single(rng):
    Xs, Ys = rng.standard_normal((5, 6, 3)), rng.standard_normal((5, 6, 2))
    t = batch_terms(Xs, Ys)
    for m in range(5):
        assert np.isclose(t["G"][m], fit(Xs[m], Ys[m]).residual, rtol=1e-12, atol=1e-12)
        assert np.isclose(t["GC"][m], fit_conformal(Xs[m], Ys[m]).residual, rtol=1e-12, atol=1e-12)


def test_perturbation_slope(rng):
    X = rng.standard_normal((10, 3))
    Z = rng.standard_normal((10, 3))
    Z /= np.linalg.norm(Z)
    eps = np.array([1e-1, 1e-2, 1e-3])
    G = [statistic(X, X + e * Z) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(G), 1)[0]
    assert 1.8 <= slope <= 2.2
