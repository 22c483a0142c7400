"""The classical and affine functionals, constraint sets, and truncations.

``phi_classical`` is total variation plus weighted bulk and boundary terms;
``phi_affine`` replaces the total variation of the zero extension by its
affine energy.  Constraint sets:

* X: unit L^q sphere over the domain;
* Y: X intersected with the generalized-mean orthogonality
  ``sum |u - s|^(r-1) (u - s) = 0`` at s = 0;
* zero-trace variants clamp the outermost inside-cell layer to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import affine_energy_extended, constants
from .errors import AffineBVError, GridError
from .grid import GridFunction, extract_trace, lq_norm
from .variation import CELL_GRADIENT, compute_atoms, total_variation


@dataclass
class Weights:
    """Bounded weights: ``a`` per inside cell, ``b`` per boundary face.

    ``b`` must be nonnegative unless ``allow_negative_b`` is set explicitly.
    Scalars broadcast.
    """

    a: float | np.ndarray = 0.0
    b: float | np.ndarray = 0.0
    allow_negative_b: bool = False

    def __post_init__(self):
        if not self.allow_negative_b and np.any(np.asarray(self.b) < 0):
            raise AffineBVError(
                "negative boundary weight; set allow_negative_b to override"
            )

    def bulk_term(self, u, mask):
        vals = np.abs(u.values[mask.inside])
        return float(np.sum(np.asarray(self.a) * vals) * mask.spec.cell_volume)

    def boundary_term(self, u, mask, mode=None):
        tr = extract_trace(u, mask, mode=mode)
        return float(np.sum(np.asarray(self.b) * np.abs(tr.values) * tr.areas))


@dataclass(frozen=True)
class ConstraintSpec:
    """Which constraint set a minimization runs over."""

    q: float
    kind: str = "X"            # "X" or "Y"
    r: float = 1.0             # Y only
    zero_trace: bool = False   # X0 / Y0 variants

    def __post_init__(self):
        n_over = None  # critical exponent depends on dim; checked at use site
        if self.kind not in ("X", "Y"):
            raise AffineBVError(f"constraint kind must be X or Y, got {self.kind}")
        if self.q < 1 or self.r < 1:
            raise AffineBVError("exponents must be >= 1")
        del n_over

    def is_critical(self, dim):
        return abs(self.q - dim / (dim - 1.0)) < 1e-12


@dataclass(frozen=True)
class TruncationPair:
    """Split u = T_h u + R_h u with |T_h u| <= h, exact pointwise."""

    level: float
    truncated: GridFunction
    remainder: GridFunction


def truncate(u, h):
    if not h > 0:
        raise AffineBVError(f"truncation level must be > 0, got {h}")
    t = np.clip(u.values, -h, h)
    return TruncationPair(level=float(h),
                          truncated=u.with_values(t),
                          remainder=u.with_values(u.values - t))


def phi_classical(u, mask, weights, backend=CELL_GRADIENT, boundary_mode=None):
    """|Du|(Omega) + int a|u| + int b|u-tilde|."""
    atoms = compute_atoms(u, mask, backend=backend, include_boundary=False)
    return (total_variation(atoms)
            + weights.bulk_term(u, mask)
            + weights.boundary_term(u, mask, mode=boundary_mode))


def phi_affine(u, mask, weights, quadrature, backend=CELL_GRADIENT,
               boundary_mode=None, consts=None):
    """Affine energy of the zero extension plus the weight terms."""
    consts = consts or constants(mask.spec.dim)
    e = affine_energy_extended(u, mask, backend, quadrature, consts=consts,
                               boundary_mode=boundary_mode)
    return (e.value
            + weights.bulk_term(u, mask)
            + weights.boundary_term(u, mask, mode=boundary_mode))


def _mr_residual(vals, m, r, cell_volume):
    d = vals - m
    return float(np.sum(np.abs(d) ** (r - 1.0) * d) * cell_volume)


def m_r_solve(u, mask, r, tol=1e-10, max_iter=200):
    """The unique m with ``sum |u - m|^(r-1) (u - m) h^n = 0``.

    The residual is strictly decreasing in m, so bisection on
    [min u, max u] is unconditionally safe.  For r = 1 this is the mean.
    """
    if r < 1:
        raise AffineBVError(f"r must be >= 1, got {r}")
    vals = u.values[mask.inside]
    if vals.size == 0:
        raise GridError("empty mask")
    h_n = mask.spec.cell_volume
    if r == 1.0:
        return float(np.mean(vals))
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        return lo
    span = hi - lo
    for _ in range(max_iter):
        m = 0.5 * (lo + hi)
        g = _mr_residual(vals, m, r, h_n)
        scale = float(np.sum(np.abs(vals - m) ** (r - 1.0)) * h_n)
        # require both a small residual and a resolved bracket, so the
        # returned location is accurate, not just the residual
        if (abs(g) <= tol * max(scale, 1e-300)
                and hi - lo <= 1e-13 * max(span, 1e-300)):
            return m
        if g > 0:
            lo = m
        else:
            hi = m
    return 0.5 * (lo + hi)


def rim_cells(mask):
    """Boolean field marking inside cells adjacent to the boundary."""
    rim = np.zeros(mask.spec.shape, dtype=bool)
    rim[tuple(mask.face_cells.T)] = True
    return rim


def clamp_rim(u, mask):
    """Zero the outermost inside-cell layer (discrete zero trace)."""
    return u.with_values(np.where(rim_cells(mask), 0.0, u.values))


@dataclass
class ProjectionResult:
    u: GridFunction
    converged: bool
    norm_residual: float
    orth_residual: float
    rounds: int


def project_constraint(u, spec, mask, tol=1e-8, max_rounds=100):
    """Restore membership in X or Y (and the zero-trace variants).

    X: scale to unit L^q norm.  Y: alternate subtracting the m_r shift and
    renormalizing until both residuals fall below ``tol``; non-convergence
    is flagged, never silent.
    """
    v = u.with_values(np.where(mask.inside, u.values, 0.0))
    if spec.zero_trace:
        v = clamp_rim(v, mask)
    norm = lq_norm(v, mask, spec.q)
    if norm == 0.0:
        raise AffineBVError("cannot project the zero field onto the constraint set")
    if spec.kind == "X":
        v = v.with_values(v.values / norm)
        return ProjectionResult(v, True, 0.0, 0.0, 0)
    scale = max(float(np.max(np.abs(v.values))), 1e-300)
    for rounds in range(1, max_rounds + 1):
        s = m_r_solve(v, mask, spec.r)
        v = v.with_values(np.where(mask.inside, v.values - s, 0.0))
        if spec.zero_trace:
            v = v.with_values(np.where(rim_cells(mask), 0.0, v.values))
        norm = lq_norm(v, mask, spec.q)
        if norm == 0.0:
            raise AffineBVError("field collapsed to zero during Y projection")
        v = v.with_values(v.values / norm)
        orth = abs(m_r_solve(v, mask, spec.r))
        nrm = abs(lq_norm(v, mask, spec.q) - 1.0)
        scale = max(float(np.max(np.abs(v.values))), 1e-300)
        if orth <= tol * scale and nrm <= tol:
            return ProjectionResult(v, True, nrm, orth, rounds)
    return ProjectionResult(v, False, nrm, orth, max_rounds)
