"""Local Procrustes quality measures of an embedding.

For each neighborhood ``X_i`` and its image ``Y_i``:

* ``R``     mean of ``G(X_i, Y_i)``
* ``R_N``   mean of ``G(X_i, Y_i) / |H X_i|^2``
* ``R_PCA`` mean of ``G(X_i P_i, Y_i)`` with ``P_i`` the local PCA frame
* ``R_C``   mean of ``G_C(X_i, Y_i) / |H X_i|^2`` (scale allowed per neighborhood)
* lower bound: mean rank-``d`` PCA residual ``/ |H X_i|^2``; no ``Y`` scores below it in ``R_N``.

Neighborhoods with ``|H X_i|^2 < DEGENERATE_TOL`` (duplicated points) are
skipped by the normalized measures and the mean is taken over the rest.
``R`` is averaged over every neighborhood since ``G`` needs no normalizer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, InvalidInput
from .neighborhoods import NeighborhoodGraph
from .numerics import as_matrix
from .procrustes import batch_terms

DEGENERATE_TOL = 1e-14


@dataclass(frozen=True)
class MeasureReport:
    R: float
    R_N: float
    R_PCA: float | None
    R_C: float
    lower_bound_N: float
    n: int
    skipped: int
    neighborhood: dict
    G: np.ndarray
    G_C: np.ndarray
    normalizer: np.ndarray
    skipped_mask: np.ndarray

    @property
    def per_neighborhood(self):
        return [
            {"index": i, "G": float(self.G[i]), "normalizer": float(self.normalizer[i]),
             "skipped": bool(self.skipped_mask[i])}
            for i in range(self.n)
        ]

    def summary(self) -> str:
        rp = "nan" if self.R_PCA is None else f"{self.R_PCA:.6g}"
        return (f"R={self.R:.6g} R_N={self.R_N:.6g} R_PCA={rp} R_C={self.R_C:.6g} "
                f"LB={self.lower_bound_N:.6g} skipped={self.skipped}")

    def to_dict(self) -> dict:
        return {
            "R": self.R, "R_N": self.R_N, "R_PCA": self.R_PCA, "R_C": self.R_C,
            "lower_bound_N": self.lower_bound_N, "n": self.n, "skipped": self.skipped,
            "neighborhood": self.neighborhood,
            "per_neighborhood": {
                "G": self.G.tolist(), "G_C": self.G_C.tolist(),
                "normalizer": self.normalizer.tolist(),
                "skipped": self.skipped_mask.tolist(),
            },
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "MeasureReport":
        per = data["per_neighborhood"]
        return cls(
            R=data["R"], R_N=data["R_N"], R_PCA=data["R_PCA"], R_C=data["R_C"],
            lower_bound_N=data["lower_bound_N"], n=data["n"], skipped=data["skipped"],
            neighborhood=data["neighborhood"],
            G=np.asarray(per["G"], float), G_C=np.asarray(per["G_C"], float),
            normalizer=np.asarray(per["normalizer"], float),
            skipped_mask=np.asarray(per["skipped"], bool),
        )

    @classmethod
    def from_json(cls, text: str) -> "MeasureReport":
        return cls.from_dict(json.loads(text))


def _validate(X, Y, g: NeighborhoodGraph):
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0] or X.shape[0] != g.n:
        raise InvalidInput(f"row counts differ: X {X.shape[0]}, Y {Y.shape[0]}, graph {g.n}")
    if Y.shape[1] > X.shape[1]:
        raise InvalidInput("embedding dimension exceeds input dimension")
    return X, Y


def _terms(X, Y, g, want_pca=False, want_lb=False, d=None):
    """Per-neighborhood arrays, one batched pass per neighborhood-size group."""
    n = g.n
    d = Y.shape[1] if Y is not None else d
    out = {key: np.zeros(n) for key in ("G", "GC", "hx2", "Gpca", "lb")}
    for centers, mem in g.groups:
        Xs = X[mem]
        if Y is not None:
            t = batch_terms(Xs, Y[mem])
            out["G"][centers] = t["G"]
            out["GC"][centers] = t["GC"]
            out["hx2"][centers] = t["hx2"]
        if want_pca or want_lb:
            HX = Xs - Xs.mean(axis=1, keepdims=True)
            U, S, _ = np.linalg.svd(HX, full_matrices=False)
            hx2 = (HX ** 2).sum(axis=(1, 2))
            out["hx2"][centers] = hx2
            if want_lb:
                out["lb"][centers] = (S[:, d:] ** 2).sum(axis=1)
            if want_pca:
                m = min(d, S.shape[1])
                XP = np.zeros(Xs.shape[:2] + (d,))
                XP[..., :m] = U[..., :m] * S[:, None, :m]
                out["Gpca"][centers] = batch_terms(XP, Y[mem])["G"]
    return out


def _normalized_mean(num, hx2):
    keep = hx2 >= DEGENERATE_TOL
    if not keep.any():
        raise DegenerateInput("every neighborhood has zero spread")
    return float(np.mean(num[keep] / hx2[keep])), keep


def measure_R(X, Y, g: NeighborhoodGraph) -> float:
    X, Y = _validate(X, Y, g)
    return float(np.mean(_terms(X, Y, g)["G"]))


def measure_RN(X, Y, g: NeighborhoodGraph) -> float:
    X, Y = _validate(X, Y, g)
    t = _terms(X, Y, g)
    return _normalized_mean(t["G"], t["hx2"])[0]


def measure_RC(X, Y, g: NeighborhoodGraph) -> float:
    X, Y = _validate(X, Y, g)
    t = _terms(X, Y, g)
    return _normalized_mean(t["GC"], t["hx2"])[0]


def measure_RPCA(X, Y, g: NeighborhoodGraph) -> float:
    X, Y = _validate(X, Y, g)
    t = _terms(X, Y, g, want_pca=True)
    keep = t["hx2"] >= DEGENERATE_TOL
    if not keep.any():
        raise DegenerateInput("every neighborhood has zero spread")
    return float(np.mean(t["Gpca"][keep]))


def lower_bound_N(X, g: NeighborhoodGraph, d: int) -> float:
    """Mean normalized rank-``d`` PCA residual of the neighborhoods."""
    X = as_matrix(X, "X")
    if not 1 <= d <= X.shape[1]:
        raise InvalidInput(f"need 1 <= d <= {X.shape[1]}")
    t = _terms(X, None, g, want_lb=True, d=d)
    return _normalized_mean(t["lb"], t["hx2"])[0]


def measure_report(X, Y, g: NeighborhoodGraph, pca: bool = True) -> MeasureReport:
    """All measures in one pass over the neighborhoods."""
    X, Y = _validate(X, Y, g)
    t = _terms(X, Y, g, want_pca=pca, want_lb=True)
    hx2 = t["hx2"]
    keep = hx2 >= DEGENERATE_TOL
    if not keep.any():
        raise DegenerateInput("every neighborhood has zero spread")
    return MeasureReport(
        R=float(np.mean(t["G"])),
        R_N=float(np.mean(t["G"][keep] / hx2[keep])),
        R_PCA=float(np.mean(t["Gpca"][keep])) if pca else None,
        R_C=float(np.mean(t["GC"][keep] / hx2[keep])),
        lower_bound_N=float(np.mean(t["lb"][keep] / hx2[keep])),
        n=g.n,
        skipped=int((~keep).sum()),
        neighborhood=g.param,
        G=t["G"], G_C=t["GC"], normalizer=hx2, skipped_mask=~keep,
    )
