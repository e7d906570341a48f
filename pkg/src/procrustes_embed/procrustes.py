"""Orthogonal and conformal Procrustes fits between a point set and its embedding.

For ``X`` (k x q) and ``Y`` (k x d), ``d <= q``, the fit finds a
columns-orthonormal ``A`` (q x d), a translation ``b`` and, for the conformal
variant, a scale ``c`` minimizing ``sum_j |x_j - c A y_j - b|^2``. Reflections
are allowed: ``A`` is any matrix with ``A'A = I``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEmbedding, InvalidInput
from .numerics import as_matrix


@dataclass(frozen=True)
class ProcrustesFit:
    A: np.ndarray
    b: np.ndarray
    c: float
    residual: float


def _check_pair(X, Y):
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise InvalidInput(f"row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    if X.shape[0] == 0:
        raise InvalidInput("empty point set")
    if Y.shape[1] > X.shape[1]:
        raise InvalidInput(f"embedding dimension {Y.shape[1]} exceeds input dimension {X.shape[1]}")
    return X, Y


def rotation_from_cross(Z: np.ndarray):
    """``A = U V'`` and ``tr L`` from the SVD of the cross-covariance ``Z = X'HY``.

    Accepts a single ``(q, d)`` matrix or a stack ``(m, q, d)``.
    """
    U, L, Vt = np.linalg.svd(Z, full_matrices=False)
    return U @ Vt, L.sum(axis=-1)


def fit(X, Y) -> ProcrustesFit:
    """Best rigid fit ``x ~ A y + b``.

    The residual uses ``|HX|^2 + |HY|^2 - 2 tr L``, clamped at zero.
    """
    X, Y = _check_pair(X, Y)
    xbar, ybar = X.mean(axis=0), Y.mean(axis=0)
    HX, HY = X - xbar, Y - ybar
    A, trL = rotation_from_cross(HX.T @ HY)
    G = max((HX ** 2).sum() + (HY ** 2).sum() - 2.0 * trL, 0.0)
    return ProcrustesFit(A, xbar - A @ ybar, 1.0, float(G))


def fit_conformal(X, Y, centered_scale: bool = True) -> ProcrustesFit:
    """Best fit ``x ~ c A y + b`` with a free scale ``c >= 0``.

    ``c = tr L / |HY|^2``. With ``centered_scale=False`` the denominator is
    the uncentered ``tr(Y'Y)`` instead, and the residual is evaluated
    directly for that (then suboptimal) scale.
    """
    X, Y = _check_pair(X, Y)
    xbar, ybar = X.mean(axis=0), Y.mean(axis=0)
    HX, HY = X - xbar, Y - ybar
    hy2 = (HY ** 2).sum()
    if hy2 <= 0.0:
        raise DegenerateEmbedding("all embedded points coincide; scale is undefined")
    A, trL = rotation_from_cross(HX.T @ HY)
    hx2 = (HX ** 2).sum()
    if centered_scale:
        c = max(trL / hy2, 0.0)
        G = max(hx2 - trL ** 2 / hy2, 0.0)
    else:
        c = max(trL / (Y ** 2).sum(), 0.0)
        G = max(hx2 - 2.0 * c * trL + c * c * hy2, 0.0)
    return ProcrustesFit(A, xbar - c * (A @ ybar), float(c), float(G))


def apply(fitres: ProcrustesFit, Y) -> np.ndarray:
    """Rows ``c A y_j + b``."""
    Y = as_matrix(Y, "Y")
    if Y.shape[1] != fitres.A.shape[1]:
        raise InvalidInput(f"Y has {Y.shape[1]} columns, fit expects {fitres.A.shape[1]}")
    return fitres.c * (Y @ fitres.A.T) + fitres.b


def statistic(X, Y) -> float:
    """The Procrustes statistic ``G(X, Y)``."""
    return fit(X, Y).residual


def batch_terms(Xs: np.ndarray, Ys: np.ndarray):
    """Per-neighborhood quantities for stacks of neighborhoods.

    Parameters
    ----------
    Xs : (m, k, q) ndarray
    Ys : (m, k, d) ndarray

    Returns
    -------
    dict with ``A`` (m, q, d), ``trL``, ``hx2`` = |HX|^2, ``hy2`` = |HY|^2,
    ``G`` and ``GC`` (conformal residual; equals ``hx2`` where ``hy2 == 0``).
    """
    HX = Xs - Xs.mean(axis=1, keepdims=True)
    HY = Ys - Ys.mean(axis=1, keepdims=True)
    A, trL = rotation_from_cross(np.swapaxes(HX, 1, 2) @ HY)
    hx2 = (HX ** 2).sum(axis=(1, 2))
    hy2 = (HY ** 2).sum(axis=(1, 2))
    G = np.maximum(hx2 + hy2 - 2.0 * trL, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        GC = np.where(hy2 > 0, hx2 - trL ** 2 / np.where(hy2 > 0, hy2, 1.0), hx2)
    GC = np.maximum(GC, 0.0)
    return {"A": A, "trL": trL, "hx2": hx2, "hy2": hy2, "G": G, "GC": GC}
