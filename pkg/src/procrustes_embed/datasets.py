"""Synthetic manifolds with ground-truth coordinates and tangent frames.

Each generator returns a :class:`SyntheticDataset` holding the sample ``X``
(n x 3), the preimage ``Z`` (n x 2) and an orthonormal tangent frame per
point (``jacobians``, n x 3 x 2). For the swissroll, cylinder and plane the
chart is an isometry, so the frames are the true Jacobians.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .neighborhoods import NeighborhoodGraph
from .numerics import as_matrix, make_rng, pca_projection, random_rotation

SWISSROLL_T = (1.5 * np.pi, 4.5 * np.pi)
SWISSROLL_HEIGHT = 21.0
CYLINDER_RADIUS = 1.0
CYLINDER_HEIGHT = 2 * np.pi * 0.6


@dataclass(frozen=True)
class SyntheticDataset:
    X: np.ndarray
    Z: np.ndarray
    kind: str
    noise_sigma: float = 0.0
    jacobians: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)


def _arclength(t):
    """Arc length of the spiral ``(t cos t, t sin t)`` from 0 to ``t``."""
    return 0.5 * (t * np.sqrt(1.0 + t * t) + np.arcsinh(t))


def _arclength_inverse(s, t_lo):
    """Solve ``_arclength(t) - _arclength(t_lo) = s`` by Newton's method."""
    target = s + _arclength(t_lo)
    t = np.sqrt(np.maximum(2.0 * target, t_lo ** 2))
    for _ in range(50):
        step = (_arclength(t) - target) / np.sqrt(1.0 + t * t)
        t = t - step
        if np.max(np.abs(step)) < 1e-14 * max(1.0, float(np.max(t))):
            break
    return t


def swissroll_map(Z):
    """Map arc-length coordinates ``(s, h)`` onto the swissroll."""
    Z = as_matrix(Z)
    t = _arclength_inverse(Z[:, 0], SWISSROLL_T[0])
    return np.column_stack((t * np.cos(t), Z[:, 1], t * np.sin(t)))


def gen_swissroll(n: int = 1600, noise_sigma: float = 0.0, rng=None) -> SyntheticDataset:
    """Swissroll ``(t cos t, h, t sin t)`` sampled uniformly in arc length.

    ``t`` spans ``[3pi/2, 9pi/2]`` and ``h`` spans ``[0, 21]``. ``Z`` holds
    ``(s, h)`` where ``s`` is the arc length along the spiral, which makes
    the chart an exact isometry. Gaussian noise is added to ``X`` only.
    """
    if n < 1:
        raise InvalidInput("n must be >= 1")
    if noise_sigma < 0:
        raise InvalidInput("noise_sigma must be >= 0")
    rng = make_rng(rng)
    t0, t1 = SWISSROLL_T
    s_max = _arclength(t1) - _arclength(t0)
    s = rng.uniform(0.0, s_max, n)
    h = rng.uniform(0.0, SWISSROLL_HEIGHT, n)
    t = _arclength_inverse(s, t0)
    X = np.column_stack((t * np.cos(t), h, t * np.sin(t)))
    norm = np.sqrt(1.0 + t * t)
    J = np.zeros((n, 3, 2))
    J[:, 0, 0] = (np.cos(t) - t * np.sin(t)) / norm
    J[:, 2, 0] = (np.sin(t) + t * np.cos(t)) / norm
    J[:, 1, 1] = 1.0
    if noise_sigma > 0:
        X = X + noise_sigma * rng.standard_normal(X.shape)
    meta = {"t_range": list(SWISSROLL_T), "height": SWISSROLL_HEIGHT, "arc_length": float(s_max)}
    return SyntheticDataset(X, np.column_stack((s, h)), "swissroll", noise_sigma, J, meta)


def gen_hemisphere(n: int = 2500, rng=None) -> SyntheticDataset:
    """Area-uniform sample of the unit upper hemisphere.

    The height is uniform on [0, 1] (equal-area zones), the azimuth uniform.
    ``Z`` is the azimuthal equidistant projection about the pole; no
    isometric chart exists, so ``Z`` is only a reference layout. The
    frames are the orthonormal (polar, azimuthal) tangent directions.
    """
    if n < 1:
        raise InvalidInput("n must be >= 1")
    rng = make_rng(rng)
    z = rng.uniform(0.0, 1.0, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    rho = np.sqrt(1.0 - z * z)
    X = np.column_stack((rho * np.cos(phi), rho * np.sin(phi), z))
    polar = np.arccos(z)
    Z = np.column_stack((polar * np.cos(phi), polar * np.sin(phi)))
    J = np.zeros((n, 3, 2))
    J[:, 0, 0] = z * np.cos(phi)
    J[:, 1, 0] = z * np.sin(phi)
    J[:, 2, 0] = -rho
    J[:, 0, 1] = -np.sin(phi)
    J[:, 1, 1] = np.cos(phi)
    return SyntheticDataset(X, Z, "hemisphere", 0.0, J, {"isometric": False})


def gen_cylinder(n: int = 800, rng=None, radius: float = CYLINDER_RADIUS,
                 height: float = CYLINDER_HEIGHT) -> SyntheticDataset:
    """Uniform sample of a cylinder of the given radius and height.

    ``Z = (radius * angle, height)`` with the angle in ``[0, 2pi)``: a local
    isometry with a seam at angle 0.
    """
    if n < 1:
        raise InvalidInput("n must be >= 1")
    rng = make_rng(rng)
    a = rng.uniform(0.0, 2 * np.pi, n)
    h = rng.uniform(0.0, height, n)
    X = np.column_stack((radius * np.cos(a), radius * np.sin(a), h))
    J = np.zeros((n, 3, 2))
    J[:, 0, 0] = -np.sin(a)
    J[:, 1, 0] = np.cos(a)
    J[:, 2, 1] = 1.0
    meta = {"radius": radius, "height": height, "circumference": 2 * np.pi * radius}
    return SyntheticDataset(X, np.column_stack((radius * a, h)), "cylinder", 0.0, J, meta)


def gen_plane(n: int = 400, rng=None, q: int = 3, size: float = 10.0) -> SyntheticDataset:
    """Flat square patch placed in ``R^q`` by a random rotation."""
    rng = make_rng(rng)
    Z = rng.uniform(0.0, size, (n, 2))
    Q = random_rotation(q, rng)[:, :2]
    return SyntheticDataset(Z @ Q.T, Z, "plane", 0.0, np.broadcast_to(Q, (n, q, 2)).copy(), {})


GENERATORS = {
    "swissroll": gen_swissroll,
    "hemisphere": gen_hemisphere,
    "cylinder": gen_cylinder,
    "plane": gen_plane,
}


def subspace_angles(P, J, vectors: bool = False):
    """Principal angles between the column spaces of two orthonormal frames.

    Returns the ``d`` angles in radians, non-decreasing. With
    ``vectors=True`` also returns the principal vectors ``(P V, J U)``.
    """
    P = as_matrix(P, "P")
    J = as_matrix(J, "J")
    if P.shape != J.shape:
        raise InvalidInput(f"frame shapes differ: {P.shape} vs {J.shape}")
    d = P.shape[1]
    for name, F in (("P", P), ("J", J)):
        if not np.allclose(F.T @ F, np.eye(d), atol=1e-8):
            raise InvalidInput(f"{name} columns are not orthonormal")
    U, s, Vt = np.linalg.svd(J.T @ P)
    angles = np.arccos(np.clip(s, 0.0, 1.0))
    if vectors:
        return angles, P @ Vt.T, J @ U
    return angles


def tangency_report(ds: SyntheticDataset, g: NeighborhoodGraph) -> dict:
    """Compare local PCA frames with the analytic tangent frames.

    Returns per-point arrays ``max_angle`` (largest principal angle between
    the PCA plane of ``X_i`` and ``J_i``), ``deficit`` (spread of ``X_i``
    minus the spread of its projection on ``J_i``) and ``radius``.
    """
    if ds.jacobians is None:
        raise InvalidInput("dataset has no tangent frames")
    d = ds.jacobians.shape[2]
    max_angle = np.zeros(g.n)
    deficit = np.zeros(g.n)
    for i in range(g.n):
        Xi = ds.X[g.members(i)]
        C = Xi - Xi.mean(axis=0)
        J = ds.jacobians[i]
        P, _ = pca_projection(Xi, d)
        max_angle[i] = subspace_angles(P, J)[-1]
        deficit[i] = (C ** 2).sum() - ((C @ J) ** 2).sum()
    return {"max_angle": max_angle, "deficit": deficit, "radius": g.radii.copy()}


def shortcut_edges(ds: SyntheticDataset, g: NeighborhoodGraph, ratio: float = np.pi / 2) -> np.ndarray:
    """Graph edges ``(i, j)`` whose chart distance exceeds ``ratio`` times the ambient one.

    On a well-sampled isometric chart every neighbor pair satisfies
    ``|x_i - x_j| <= |z_i - z_j| <= (pi/2) |x_i - x_j|``. Violations mean the
    neighborhood bridges two layers of the surface (or crosses the
    cylinder's seam, where the chart itself is discontinuous).
    """
    adj = g.adjacency.tocoo()
    dx = np.linalg.norm(ds.X[adj.row] - ds.X[adj.col], axis=1)
    dz = np.linalg.norm(ds.Z[adj.row] - ds.Z[adj.col], axis=1)
    bad = dz > ratio * dx
    return np.stack((adj.row[bad], adj.col[bad]), axis=1)
