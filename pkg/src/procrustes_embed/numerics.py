"""Dense linear algebra, randomness and the centered SPD solver.

Every random quantity in the package comes from a ``numpy.random.Generator``
built on PCG64 (see :func:`make_rng`); the same seed yields the same stream
on every platform numpy supports.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInput, SolverDiverged

FACTOR_TOL = 1e-10
SOLVE_TOL = 1e-8


def make_rng(seed=None) -> np.random.Generator:
    """Return a PCG64 generator. Passing a Generator returns it unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(M, name="matrix") -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    return A


def center(M):
    """Subtract column means.

    Returns
    -------
    centered : ndarray
        ``H @ M`` with ``H = I - 11'/k``.
    mean : ndarray
        Column-mean row vector.
    """
    M = as_matrix(M)
    if M.shape[0] == 0:
        raise InvalidInput("cannot center an empty matrix")
    mean = M.mean(axis=0)
    return M - mean, mean


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    L: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.L) @ self.V.T


def thin_svd(M) -> SvdResult:
    """Thin SVD ``M = U diag(L) V'`` with ``L`` non-increasing."""
    M = as_matrix(M)
    U, L, Vt = np.linalg.svd(M, full_matrices=False)
    return SvdResult(U, L, Vt.T)


def fix_signs(P: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive.

    ``argmax`` returns the first maximum, so ties go to the lowest row index.
    Works on a single ``(q, d)`` frame or a stack ``(..., q, d)``.
    """
    idx = np.argmax(np.abs(P), axis=-2)
    picked = np.take_along_axis(P, idx[..., None, :], axis=-2)
    signs = np.where(picked < 0, -1.0, 1.0)
    return P * signs


def pca_projection(M, d: int):
    """Top-``d`` principal directions of the rows of ``M``.

    Parameters
    ----------
    M : (k, q) array_like
        Points, one per row. Centered internally.
    d : int
        Number of components.

    Returns
    -------
    P : (q, d) ndarray
        Orthonormal columns, sign-normalized by :func:`fix_signs`.
    eigenvalues : (d,) ndarray
        Top eigenvalues of the sample covariance ``(HM)'(HM)/k``.
    """
    M = as_matrix(M)
    k, q = M.shape
    if d > q or d < 1:
        raise InvalidInput(f"need 1 <= d <= {q}, got d={d}")
    if k < 2:
        raise InvalidInput("PCA needs at least 2 rows")
    C, _ = center(M)
    _, s, Vt = np.linalg.svd(C, full_matrices=True)
    P = fix_signs(Vt[:d].T)
    ev = np.zeros(d)
    m = min(d, s.size)
    ev[:m] = s[:m] ** 2 / k
    return P, ev


def haar_orthogonal(d: int, rng, size=None) -> np.ndarray:
    """Haar-distributed orthogonal matrices (reflections included).

    QR of a Gaussian matrix with the diagonal of R made positive.
    ``size`` adds leading batch dimensions.
    """
    shape = (d, d) if size is None else (*np.atleast_1d(size), d, d)
    G = rng.standard_normal(shape)
    Q, R = np.linalg.qr(G)
    sgn = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    sgn[sgn == 0] = 1.0
    return Q * sgn[..., None, :]


def random_rotation(d: int, rng=None, size=None) -> np.ndarray:
    """Haar-uniform rotation in SO(d) (determinant +1)."""
    if d < 1:
        raise InvalidInput("rotation dimension must be >= 1")
    rng = make_rng(rng)
    O = haar_orthogonal(d, rng, size)
    neg = np.linalg.det(O) < 0
    O[..., :, 0] = np.where(neg[..., None], -O[..., :, 0], O[..., :, 0])
    return O


def component_means_remove(x: np.ndarray, labels: np.ndarray, counts: np.ndarray):
    """Subtract per-component means from each column of ``x`` (in place safe copy)."""
    sums = np.zeros((counts.size,) + x.shape[1:])
    np.add.at(sums, labels, x)
    return x - (sums / counts.reshape((-1,) + (1,) * (x.ndim - 1)))[labels]


def solve_centered_spd(
    apply: Callable[[np.ndarray], np.ndarray],
    rhs,
    tol: float = SOLVE_TOL,
    labels=None,
    max_iter: int | None = None,
) -> np.ndarray:
    """Minimum-norm solution of ``S x = rhs`` for a PSD ``S`` that kills constants.

    ``S`` is accessed only through ``apply``. Its null space must be spanned
    by the indicator vectors of the components given in ``labels`` (all one
    component if omitted). Conjugate gradients run per column with the
    iterates projected onto the complement of that null space.

    Raises
    ------
    SolverDiverged
        If the relative residual is above ``tol`` after ``max_iter``
        iterations (default ``10 * n``).
    """
    b = np.asarray(rhs, dtype=float)
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    n = b.shape[0]
    if labels is None:
        labels = np.zeros(n, dtype=np.intp)
    labels = np.asarray(labels, dtype=np.intp)
    counts = np.bincount(labels).astype(float)
    if max_iter is None:
        max_iter = 10 * n

    def project(v):
        return component_means_remove(v, labels, counts)

    b = project(b)
    X = np.zeros_like(b)
    for c in range(b.shape[1]):
        bc = b[:, c]
        bnorm = np.linalg.norm(bc)
        if bnorm == 0.0:
            continue
        x = np.zeros(n)
        r = bc.copy()
        p = r.copy()
        rr = r @ r
        it = 0
        while np.sqrt(rr) > tol * bnorm:
            if it >= max_iter:
                raise SolverDiverged("conjugate gradients did not converge", np.sqrt(rr) / bnorm)
            Ap = project(apply(p[:, None]))[:, 0]
            pAp = p @ Ap
            if pAp <= 0:
                raise SolverDiverged("operator is not positive on the search direction", np.sqrt(rr) / bnorm)
            alpha = rr / pAp
            x += alpha * p
            r -= alpha * Ap
            rr_new = r @ r
            p = r + (rr_new / rr) * p
            rr = rr_new
            it += 1
            if it % 50 == 0:
                # refresh the recursive residual to keep it honest
                r = bc - project(apply(x[:, None]))[:, 0]
                rr = r @ r
        X[:, c] = project(x[:, None])[:, 0]
    return X[:, 0] if vec else X
