"""Closed-form reference values for polygons and ellipsoids.

These are evaluated independently of the grid pipeline and anchor the
verification suite: per-direction boundary variation of convex bodies and
the resulting affine energies.  The ellipsoid closed form is validated
against dense boundary quadrature before use (``self_check``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import constants, energy_from_psi, make_quadrature
from .errors import AffineBVError, ShapeError


@dataclass(frozen=True)
class PolygonBody:
    """Simple closed 2D polygon, counterclockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ShapeError("polygon needs >= 3 vertices in 2D")
        area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area2 <= 0:
            raise ShapeError("polygon must be counterclockwise with positive area")
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self):
        return 2

    def edges(self):
        """(lengths, outward unit normals)."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(e, axis=1)
        if np.any(lengths == 0):
            raise ShapeError("degenerate polygon edge")
        t = e / lengths[:, None]
        normals = np.stack([t[:, 1], -t[:, 0]], axis=1)  # CCW -> outward
        return lengths, normals


@dataclass(frozen=True)
class EllipsoidBody:
    """Image of the unit ball under an invertible matrix, plus a center."""

    dim: int
    matrix: np.ndarray
    center: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        if A.shape != (self.dim, self.dim):
            raise ShapeError(f"matrix must be {self.dim}x{self.dim}")
        if abs(np.linalg.det(A)) < 1e-300:
            raise ShapeError("singular ellipsoid matrix")
        object.__setattr__(self, "matrix", A)
        c = np.zeros(self.dim) if self.center is None else np.asarray(self.center, float)
        object.__setattr__(self, "center", c)


def psi_polygon(body, xi):
    """Boundary directional variation of the polygon indicator:
    sum of edge_length * |normal . xi|."""
    xi = np.asarray(xi, dtype=float)
    lengths, normals = body.edges()
    return float(np.sum(lengths * np.abs(normals @ xi)))


def psi_ellipsoid(body, xi):
    """Boundary directional variation of the ellipsoid indicator.

    For the image A(B) of the unit ball, parametrizing the boundary by
    x = A s over the unit sphere turns the integral of |nu . xi| into
    ``|det A| int |s . A^{-1} xi| dS = 2 omega_{n-1} |det A| |A^{-1} xi|``.
    """
    xi = np.asarray(xi, dtype=float)
    n = body.dim
    om = constants(n).omegas[n - 2]
    Ainv = np.linalg.inv(body.matrix)
    return float(2.0 * om * abs(np.linalg.det(body.matrix))
                 * np.linalg.norm(Ainv @ xi))


def psi_ellipsoid_quadrature(body, xi, n_samples=200_000, rng=None):
    """Dense boundary quadrature of the same integral, for the self-check.

    Parametrizes the boundary as A(s) over the unit sphere; the surface
    element is |det A| |A^{-T} s| dS and the normal is A^{-T}s / |A^{-T}s|.
    """
    xi = np.asarray(xi, dtype=float)
    n = body.dim
    A = body.matrix
    AinvT = np.linalg.inv(A).T
    if n == 2:
        t = (np.arange(n_samples) + 0.5) * (2 * np.pi / n_samples)
        s = np.stack([np.cos(t), np.sin(t)], axis=1)
        dS = 2 * np.pi / n_samples
    else:
        rng = rng or np.random.default_rng(0)
        s = rng.normal(size=(n_samples, 3))
        s /= np.linalg.norm(s, axis=1, keepdims=True)
        dS = 4 * np.pi / n_samples
    g = s @ AinvT.T
    return float(abs(np.linalg.det(A)) * np.sum(np.abs(g @ xi)) * dS)


def psi_body(body, xi):
    if isinstance(body, PolygonBody):
        return psi_polygon(body, xi)
    return psi_ellipsoid(body, xi)


def energy_body(body, consts=None, quadrature=None):
    """Affine energy of the body's indicator from oracle Psi samples.

    For ellipsoids the value is gated against the closed form
    ``n omega_n^(1/n) (omega_n |det A|)^((n-1)/n)`` at 1e-4 relative.
    """
    dim = body.dim
    consts = consts or constants(dim)
    if quadrature is None:
        quadrature = make_quadrature(dim, 4096 if dim == 2 else 8192)
    psi = np.array([psi_body(body, xi) for xi in quadrature.directions])
    out = energy_from_psi(psi, quadrature, consts)
    if isinstance(body, EllipsoidBody):
        vol = consts.omega_n * abs(np.linalg.det(body.matrix))
        exact = consts.sharp_sobolev * vol ** ((dim - 1.0) / dim)
        if abs(out.value - exact) > 1e-4 * exact:
            raise AffineBVError(
                f"ellipsoid energy self-check failed: {out.value} vs {exact}"
            )
    return out.value


def self_check(n_bodies=50, dim=2, seed=7, rtol=1e-6):
    """Validate the ellipsoid closed form against dense boundary quadrature
    on random matrices; raises on disagreement."""
    rng = np.random.default_rng(seed)
    for _ in range(n_bodies):
        A = rng.normal(size=(dim, dim))
        while abs(np.linalg.det(A)) < 0.1:
            A = rng.normal(size=(dim, dim))
        body = EllipsoidBody(dim=dim, matrix=A)
        xi = rng.normal(size=dim)
        xi /= np.linalg.norm(xi)
        closed = psi_ellipsoid(body, xi)
        dense = psi_ellipsoid_quadrature(body, xi, rng=rng)
        tol = rtol if dim == 2 else 5e-3  # MC quadrature in 3D
        if abs(closed - dense) > tol * abs(closed):
            raise AffineBVError(
                f"ellipsoid oracle self-check failed: {closed} vs {dense}"
            )
    return True
