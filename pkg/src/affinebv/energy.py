"""Sharp constants, spherical quadrature, and the three affine energies.

The affine energy of an atom set is

    E = alpha_n * (sum_j w_j Psi_j^(-n))^(-1/n)

over a quadrature of the unit sphere, where Psi_j is the directional
variation in direction xi_j.  The energy vanishes exactly when the variation
has no mass in some direction; the covariance rank test detects this
independently of the quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .errors import AffineBVError, GridError
from .variation import (
    atoms_from_trace,
    compute_atoms,
    covariance_eigen_ratio,
    psi_samples,
    total_variation,
)

# relative Psi-floor below which the quadrature value is meaningless and the
# true energy is 0 (vanishing characterization)
DEGENERACY_EPS = 1e-8
COV_EIGEN_EPS = 1e-12
PSI_CLAMP = 1e-300


def unit_ball_volume(k):
    """omega_k, volume of the unit ball in R^k (omega_0 = 1)."""
    return math.pi ** (k / 2) / gamma(k / 2 + 1)


@dataclass(frozen=True)
class EnergyConstants:
    """Closed-form constants for dimension n."""

    dim: int
    omegas: tuple          # omega_1 .. omega_n
    alpha: float           # normalization of the affine energy
    sharp_sobolev: float   # n * omega_n^(1/n)
    d0: float              # Huang-Li constant

    @property
    def omega_n(self):
        return self.omegas[-1]

    @property
    def sphere_area(self):
        return self.dim * self.omega_n

    def as_dict(self):
        return {
            "dim": self.dim,
            **{f"omega_{k + 1}": w for k, w in enumerate(self.omegas)},
            "alpha_n": self.alpha,
            "sharp_sobolev": self.sharp_sobolev,
            "d0": self.d0,
        }


def constants(n):
    """Evaluate all closed-form constants for dimension ``n >= 2``."""
    if n < 2:
        raise AffineBVError(f"dimension must be >= 2, got {n}")
    omegas = tuple(unit_ball_volume(k) for k in range(1, n + 1))
    alpha = (2 * omegas[n - 2]) ** (-1.0) * (n * omegas[n - 1]) ** (1.0 + 1.0 / n)
    sharp = n * omegas[n - 1] ** (1.0 / n)
    d0 = (
        0.25 * math.pi * gamma((n + 1) / 2)
        * gamma(n + 1.0) ** (1.0 / n)
        * gamma(n / 2 + 1.0) ** (-1.0 / n - 1.0)
    )
    return EnergyConstants(dim=n, omegas=omegas, alpha=float(alpha),
                           sharp_sobolev=float(sharp), d0=float(d0))


@dataclass(frozen=True)
class SphereQuadrature:
    """Antipodally balanced direction/weight pairs on S^(n-1)."""

    dim: int
    directions: np.ndarray   # (M, dim) unit vectors
    weights: np.ndarray      # (M,) positive, summing to the sphere area

    @property
    def size(self):
        return len(self.weights)

    def integrate(self, samples):
        return float(np.dot(self.weights, samples))


def make_quadrature(n, M):
    """Equispaced angles for n=2; antipodally symmetrized Fibonacci sphere
    for n=3.  ``M`` must be even and >= 4."""
    if M < 4 or M % 2 != 0:
        raise AffineBVError(f"direction count must be even and >= 4, got {M}")
    if n == 2:
        # half circle plus exact mirror: keeps the antipodal pairing
        # bit-exact, which even-integrand evaluations exploit
        theta = 2 * math.pi * np.arange(M // 2) / M
        half = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        dirs = np.concatenate([half, -half])
        w = np.full(M, 2 * math.pi / M)
    elif n == 3:
        half = M // 2
        k = np.arange(half)
        phi = math.pi * (3.0 - math.sqrt(5.0)) * k
        # open hemisphere in z to avoid duplicating equatorial points
        z = (k + 0.5) / half
        rho = np.sqrt(1.0 - z ** 2)
        pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
        dirs = np.concatenate([pts, -pts])
        w = np.full(M, 4 * math.pi / M)
    else:
        raise AffineBVError(f"quadrature supports n in {{2, 3}}, got {n}")
    return SphereQuadrature(dim=n, directions=dirs, weights=w)


@dataclass
class EnergyBreakdown:
    """Energy value plus the per-direction diagnostics behind it."""

    value: float
    psi: np.ndarray
    degenerate: bool
    cov_eigvals: np.ndarray | None = None
    backend: str = ""
    quadrature_size: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def psi_min(self):
        return float(np.min(self.psi)) if len(self.psi) else 0.0

    @property
    def psi_max(self):
        return float(np.max(self.psi)) if len(self.psi) else 0.0

    def as_dict(self):
        return {
            "value": self.value,
            "degenerate": self.degenerate,
            "psi_min": self.psi_min,
            "psi_max": self.psi_max,
            "backend": self.backend,
            "quadrature_size": self.quadrature_size,
            **self.meta,
        }


def energy_from_psi(psi, quadrature, consts, eps_deg=DEGENERACY_EPS):
    """Assemble the energy from per-direction variation samples."""
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0):
        raise AffineBVError("negative directional-variation sample")
    pmax = psi.max(initial=0.0)
    if pmax == 0.0 or psi.min() <= max(eps_deg * pmax, PSI_CLAMP):
        return EnergyBreakdown(value=0.0, psi=psi, degenerate=True,
                               quadrature_size=quadrature.size)
    n = consts.dim
    # exp/log form keeps psi^(-n) finite-range for tiny psi in 3D
    log_psi = np.log(psi)
    s = quadrature.integrate(np.exp(-n * log_psi))
    value = consts.alpha * s ** (-1.0 / n)
    return EnergyBreakdown(value=float(value), psi=psi, degenerate=False,
                           quadrature_size=quadrature.size)


def _energy_of_atoms(atoms, quadrature, consts, backend, meta=None):
    eig = covariance_eigen_ratio(atoms)
    psi = psi_samples(atoms, quadrature.directions)
    out = energy_from_psi(psi, quadrature, consts)
    if eig < COV_EIGEN_EPS:
        # rank test is primary: force the vanishing value
        out.value = 0.0
        out.degenerate = True
    out.cov_eigvals = np.array([eig])
    out.backend = backend
    out.meta = meta or {}
    return out


def affine_energy_interior(u, mask, backend, quadrature, consts=None):
    """E_Omega(u): interior atoms only."""
    consts = consts or constants(mask.spec.dim)
    atoms = compute_atoms(u, mask, backend=backend, include_boundary=False)
    return _energy_of_atoms(atoms, quadrature, consts, backend,
                            meta={"source": "interior", "tv": total_variation(atoms)})


def affine_energy_boundary(trace, quadrature, consts=None):
    """E_dOmega(u-tilde): boundary atoms only."""
    consts = consts or constants(quadrature.dim)
    atoms = atoms_from_trace(trace, quadrature.dim)
    return _energy_of_atoms(atoms, quadrature, consts, "trace",
                            meta={"source": "boundary", "tv": total_variation(atoms)})


def affine_energy_extended(u, mask, backend, quadrature, consts=None,
                           boundary_mode=None):
    """E_Rn(u-bar): interior plus boundary atoms of the zero extension."""
    consts = consts or constants(mask.spec.dim)
    atoms = compute_atoms(u, mask, backend=backend, include_boundary=True,
                          boundary_mode=boundary_mode)
    return _energy_of_atoms(atoms, quadrature, consts, backend,
                            meta={"source": "extended", "tv": total_variation(atoms)})


def energy_of_atoms(atoms, quadrature, consts):
    """Energy of a raw atom set (used by verification and the SL(n) search)."""
    return _energy_of_atoms(atoms, quadrature, consts, atoms.backend,
                            meta={"source": atoms.source})
