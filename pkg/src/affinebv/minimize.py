"""Constrained minimization of the affine functional and SL(n) normalization.

The nonsmooth energy is minimized by annealed smoothing: every absolute
value inside the directional variations and the weight terms becomes
``sqrt(t^2 + delta^2)``, descent runs with backtracking and projection onto
the constraint set, and ``delta`` is halved on stagnation.  The reported
level is always the nonsmooth functional re-evaluated at the final
projected iterate.

The SL(n) search behind the Huang-Li normalization is derivative-free:
Nelder-Mead over the traceless generator of ``T = exp(A)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import expm
from scipy.optimize import minimize as scipy_minimize

from .energy import SphereQuadrature, constants
from .errors import AffineBVError
from .functionals import phi_affine, project_constraint
from .grid import GridFunction, mollify
from .variation import CELL_GRADIENT, FACE_ATOMS

COV_RANK_EPS = 1e-12


@dataclass
class MinimizeConfig:
    max_iters: int = 500
    step_init: float = 1.0
    step_shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 40
    delta0_frac: float = 0.1
    delta_min: float = 1e-6
    stall_window: int = 50
    stall_rel: float = 1e-6
    level_window: int = 100
    level_rel: float = 1e-6
    n_starts: int = 4
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        if not (0 < self.step_shrink < 1):
            raise AffineBVError("step_shrink must be in (0, 1)")
        for name in ("delta_min", "stall_rel", "level_rel", "sufficient_decrease"):
            if getattr(self, name) <= 0:
                raise AffineBVError(f"{name} must be > 0")


@dataclass(frozen=True)
class AffineMap:
    """Unit-determinant map parametrized as the exponential of a traceless
    generator, so the determinant constraint holds to roundoff."""

    matrix: np.ndarray
    generator: np.ndarray

    @staticmethod
    def from_generator(A):
        A = np.asarray(A, dtype=float)
        if abs(np.trace(A)) > 1e-12 * max(1.0, float(np.abs(A).max())):
            raise AffineBVError("generator must be traceless")
        T = expm(A)
        if abs(np.linalg.det(T) - 1.0) > 1e-10:
            raise AffineBVError("exponential drifted off det = 1")
        return AffineMap(matrix=T, generator=A)

    @staticmethod
    def identity(n):
        return AffineMap(matrix=np.eye(n), generator=np.zeros((n, n)))


@dataclass
class MinimizeResult:
    level: float
    extremal: GridFunction
    norm_residual: float
    orth_residual: float
    histories: list
    critical_flag: bool
    degenerate: bool
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "level": self.level,
            "norm_residual": self.norm_residual,
            "orth_residual": self.orth_residual,
            "critical_flag": self.critical_flag,
            "degenerate": self.degenerate,
            "n_starts": len(self.histories),
            "start_levels": [h[-1] if h else None for h in self.histories],
            **self.meta,
        }


def _reduce_antipodal(quad):
    """Halve the direction count when the quadrature is built as +/- pairs;
    directional variations are even in xi."""
    M = quad.size
    half = M // 2
    d = quad.directions
    if M % 2 == 0 and np.allclose(d[half:], -d[:half]):
        return SphereQuadrature(dim=quad.dim, directions=d[:half],
                                weights=quad.weights[:half] * 2.0)
    return quad


class SmoothedProblem:
    """Smoothed affine functional over the inside-cell values of a mask.

    The atom components are linear in the variable vector; the constructor
    assembles one sparse matrix per spatial component so that objective and
    analytic gradient are a handful of matrix products per evaluation.
    """

    def __init__(self, mask, weights, quadrature, backend=CELL_GRADIENT,
                 consts=None, boundary_mode=None):
        self.mask = mask
        self.weights = weights
        self.backend = backend
        self.consts = consts or constants(mask.spec.dim)
        self.quad = _reduce_antipodal(quadrature)
        self.quadrature_full = quadrature
        spec = mask.spec
        self.dim = spec.dim
        self.cell_volume = spec.cell_volume
        # jump values enter atoms scaled by the face area, so the user-level
        # smoothing width is scaled the same way inside the energy term
        self.atom_scale = spec.face_area

        inside_flat = mask.inside_indices()
        self.n_var = len(inside_flat)
        lut = np.full(int(np.prod(spec.shape)), -1, dtype=np.int64)
        lut[inside_flat] = np.arange(self.n_var)
        self._inside_flat = inside_flat

        trip = {d: ([], [], []) for d in range(self.dim)}

        def add(d, r, c, v):
            trip[d][0].append(np.asarray(r, dtype=np.int64))
            trip[d][1].append(np.asarray(c, dtype=np.int64))
            trip[d][2].append(np.asarray(v, dtype=float))

        inside = mask.inside
        area = spec.face_area
        n_atoms = 0
        if backend == FACE_ATOMS:
            for d in range(self.dim):
                lo = [slice(None)] * self.dim
                hi = [slice(None)] * self.dim
                lo[d] = slice(None, -1)
                hi[d] = slice(1, None)
                both = inside[tuple(lo)] & inside[tuple(hi)]
                cell_lo = np.argwhere(both)
                cell_hi = cell_lo.copy()
                cell_hi[:, d] += 1
                vlo = lut[np.ravel_multi_index(tuple(cell_lo.T), spec.shape)]
                vhi = lut[np.ravel_multi_index(tuple(cell_hi.T), spec.shape)]
                r = n_atoms + np.arange(len(vlo))
                add(d, r, vhi, np.full(len(vlo), area))
                add(d, r, vlo, np.full(len(vlo), -area))
                n_atoms += len(vlo)
        elif backend == CELL_GRADIENT:
            cells = np.argwhere(inside)
            var = lut[np.ravel_multi_index(tuple(cells.T), spec.shape)]
            r = n_atoms + np.arange(len(cells))
            for d in range(self.dim):
                fwd = cells.copy()
                fwd[:, d] += 1
                bwd = cells.copy()
                bwd[:, d] -= 1
                nb_f = np.full(len(cells), -1, dtype=np.int64)
                ok = fwd[:, d] < spec.shape[d]
                nb_f[ok] = lut[np.ravel_multi_index(tuple(fwd[ok].T), spec.shape)]
                nb_b = np.full(len(cells), -1, dtype=np.int64)
                ok = bwd[:, d] >= 0
                nb_b[ok] = lut[np.ravel_multi_index(tuple(bwd[ok].T), spec.shape)]
                use_f = nb_f >= 0
                use_b = (~use_f) & (nb_b >= 0)
                add(d, r[use_f], nb_f[use_f], np.full(int(use_f.sum()), area))
                add(d, r[use_f], var[use_f], np.full(int(use_f.sum()), -area))
                add(d, r[use_b], var[use_b], np.full(int(use_b.sum()), area))
                add(d, r[use_b], nb_b[use_b], np.full(int(use_b.sum()), -area))
            n_atoms += len(cells)
        else:
            raise AffineBVError(f"unknown backend {backend!r}")

        normals, areas = mask.face_normals_and_areas(boundary_mode)
        fvar = lut[np.ravel_multi_index(tuple(mask.face_cells.T), spec.shape)]
        r = n_atoms + np.arange(mask.n_faces)
        for d in range(self.dim):
            coef = -normals[:, d] * areas
            nz = coef != 0.0
            add(d, r[nz], fvar[nz], coef[nz])
        n_atoms += mask.n_faces
        self.n_atoms = n_atoms
        self._face_var = fvar
        self._face_areas = areas

        self.B = []
        for d in range(self.dim):
            rr = np.concatenate(trip[d][0]) if trip[d][0] else np.zeros(0, np.int64)
            cc = np.concatenate(trip[d][1]) if trip[d][1] else np.zeros(0, np.int64)
            vv = np.concatenate(trip[d][2]) if trip[d][2] else np.zeros(0)
            self.B.append(sparse.csr_matrix((vv, (rr, cc)),
                                            shape=(n_atoms, self.n_var)))
        self.BT = [b.T.tocsr() for b in self.B]

    # -- variable <-> field ------------------------------------------------
    def to_vector(self, u):
        return u.values.ravel()[self._inside_flat].copy()

    def to_field(self, x):
        vals = np.zeros(int(np.prod(self.mask.spec.shape)))
        vals[self._inside_flat] = x
        return GridFunction(self.mask.spec, vals.reshape(self.mask.spec.shape))

    def atom_matrix(self, x):
        return np.stack([b @ x for b in self.B], axis=1)

    def is_degenerate(self, x):
        return self._degenerate_from_atoms(self.atom_matrix(x))

    @staticmethod
    def _degenerate_from_atoms(V):
        m = np.linalg.norm(V, axis=1)
        keep = m > 0
        if not keep.any():
            return True
        M = (V[keep].T * (1.0 / m[keep])) @ V[keep]
        tr = float(np.trace(M))
        return tr <= 0 or float(np.linalg.eigvalsh(M)[0]) < COV_RANK_EPS * tr

    # -- objective ---------------------------------------------------------
    def _energy_parts(self, x, delta, V=None):
        if V is None:
            V = self.atom_matrix(x)
        D = V @ self.quad.directions.T
        S = np.sqrt(D * D + (delta * self.atom_scale) ** 2)
        psi = S.sum(axis=0)
        n = self.dim
        w = self.quad.weights
        ssum = float(np.dot(w, psi ** (-float(n))))
        energy = self.consts.alpha * ssum ** (-1.0 / n)
        return D, S, psi, ssum, energy

    def _weight_parts(self, x, delta):
        a = np.asarray(self.weights.a)
        b = np.asarray(self.weights.b)
        sa = np.sqrt(x * x + delta * delta)
        aval = float(np.sum(a * sa) * self.cell_volume)
        xb = x[self._face_var]
        sb = np.sqrt(xb * xb + delta * delta)
        bval = float(np.sum(b * sb * self._face_areas))
        return sa, aval, sb, bval

    def value(self, x, delta):
        _, aval, _, bval = self._weight_parts(x, delta)
        V = self.atom_matrix(x)
        if self._degenerate_from_atoms(V):
            return aval + bval
        _, _, _, _, energy = self._energy_parts(x, delta, V=V)
        return energy + aval + bval

    def value_and_gradient(self, x, delta):
        """Smoothed objective and its analytic gradient.

        A degenerate iterate (variation covariance rank-deficient) reports
        zero energy and zero energy-gradient, flagged via the third output.
        """
        sa, aval, sb, bval = self._weight_parts(x, delta)
        a = np.asarray(self.weights.a)
        b = np.asarray(self.weights.b)
        grad = np.zeros_like(x)
        grad += a * (x / sa) * self.cell_volume
        np.add.at(grad, self._face_var,
                  b * (x[self._face_var] / sb) * self._face_areas)
        V = self.atom_matrix(x)
        if self._degenerate_from_atoms(V):
            return aval + bval, grad, True
        D, S, psi, ssum, energy = self._energy_parts(x, delta, V=V)
        n = self.dim
        coef = (self.consts.alpha * ssum ** (-1.0 / n - 1.0)
                * self.quad.weights * psi ** (-float(n) - 1.0))
        P = (D / S) @ (coef[:, None] * self.quad.directions)
        for d in range(self.dim):
            grad += self.BT[d] @ P[:, d]
        return energy + aval + bval, grad, False


def smoothed_objective_and_gradient(u, mask, weights, delta, quadrature,
                                    backend=CELL_GRADIENT, consts=None,
                                    boundary_mode=None):
    """One-shot smoothed objective/gradient of the affine functional at u.

    Returns ``(value, gradient_field, degenerate_flag)``.
    """
    if delta <= 0:
        raise AffineBVError(f"smoothing width must be > 0, got {delta}")
    prob = SmoothedProblem(mask, weights, quadrature, backend=backend,
                           consts=consts, boundary_mode=boundary_mode)
    x = prob.to_vector(u)
    val, g, degen = prob.value_and_gradient(x, delta)
    return val, prob.to_field(g), degen


def check_gradient(prob, x, delta, n_coords=20, rng=None, fd_step=None):
    """Central-difference check of the analytic gradient on random
    coordinates; returns the worst (abs_error, tolerance) pair."""
    rng = rng or np.random.default_rng(0)
    _, g, _ = prob.value_and_gradient(x, delta)
    gn = float(np.linalg.norm(g))
    tol = max(1e-5, 1e-4 * gn)
    eps = fd_step or 1e-6 * max(1.0, float(np.max(np.abs(x))))
    coords = rng.choice(prob.n_var, size=min(n_coords, prob.n_var), replace=False)
    worst = 0.0
    for c in coords:
        xp = x.copy()
        xp[c] += eps
        xm = x.copy()
        xm[c] -= eps
        fd = (prob.value(xp, delta) - prob.value(xm, delta)) / (2 * eps)
        worst = max(worst, abs(fd - g[c]))
    return worst, tol


# -- initial guesses --------------------------------------------------------

def _inscribed_ellipsoid_field(mask, rng, round_ball=False, sigma_cells=2.0):
    """Mollified indicator of an inscribed ball / randomly oriented
    ellipsoid, a natural near-extremal profile."""
    spec = mask.spec
    centers = spec.cell_centers()
    pts = centers[mask.inside]
    c = pts.mean(axis=0)
    rad = max(_inradius(mask, c) - 2 * spec.spacing, 2 * spec.spacing)
    if round_ball:
        A = np.eye(spec.dim) * rad
    else:
        q, _ = np.linalg.qr(rng.normal(size=(spec.dim, spec.dim)))
        s = rng.uniform(0.6, 1.0, size=spec.dim)
        s *= rad / np.prod(s) ** (1.0 / spec.dim)
        A = q @ np.diag(s)
    M = np.linalg.inv(A @ A.T)
    d = centers - c
    ind = (np.einsum("...i,ij,...j->...", d, M, d) < 1.0).astype(float)
    u = GridFunction(spec, np.where(mask.inside, ind, 0.0))
    return mollify(u, sigma_cells * spec.spacing)


def _inradius(mask, c):
    """Distance from c to the nearest boundary-face center."""
    fc = mask.face_centers()
    return float(np.min(np.linalg.norm(fc - c, axis=1)))


def _random_bump_field(mask, rng, sigma_cells=3.0):
    spec = mask.spec
    noise = rng.normal(size=spec.shape)
    u = mollify(GridFunction(spec, noise), sigma_cells * spec.spacing)
    return u.with_values(np.where(mask.inside, u.values, 0.0))


def _two_bump_field(mask, rng, sigma_cells=2.0):
    """Antisymmetric two-bump profile, a natural start for Y."""
    spec = mask.spec
    centers = spec.cell_centers()
    pts = centers[mask.inside]
    c = pts.mean(axis=0)
    spread = pts.std(axis=0)
    axis = np.zeros(spec.dim)
    axis[int(rng.integers(spec.dim))] = 1.0
    off = 0.8 * spread * axis
    r2 = (0.5 * float(spread.min())) ** 2
    bump = lambda p0: np.exp(-np.sum((centers - p0) ** 2, axis=-1) / r2)
    vals = bump(c + off) - bump(c - off)
    u = GridFunction(spec, np.where(mask.inside, vals, 0.0))
    return mollify(u, sigma_cells * spec.spacing)


def _domain_indicator_field(mask, sigma_cells=1.5):
    spec = mask.spec
    u = GridFunction(spec, mask.inside.astype(float))
    u = mollify(u, sigma_cells * spec.spacing)
    return u.with_values(np.where(mask.inside, u.values, 0.0))


def initial_guesses(mask, cspec, config, rng):
    guesses = [
        _inscribed_ellipsoid_field(mask, rng, round_ball=True),
        _inscribed_ellipsoid_field(mask, rng, round_ball=False),
        _random_bump_field(mask, rng),
    ]
    if cspec.kind == "Y":
        guesses.append(_two_bump_field(mask, rng))
    else:
        # the domain indicator itself is an indicator-like candidate
        guesses.insert(1, _domain_indicator_field(mask))
    while len(guesses) < config.n_starts:
        guesses.append(_random_bump_field(mask, rng))
    return guesses[: config.n_starts]


# -- projected descent -------------------------------------------------------

def _descend(prob, cspec, x0, config):
    """One projected-descent start.  Returns (x, history, flags)."""
    mask = prob.mask

    def project(x):
        return project_constraint(prob.to_field(x), cspec, mask)

    pres = project(x0)
    x = prob.to_vector(pres.u)
    # pick delta so the smoothing floor (each atom gains ~delta*atom_scale)
    # contributes a small fraction of the initial total variation
    tv0 = float(np.linalg.norm(prob.atom_matrix(x), axis=1).sum())
    floor = max(prob.n_atoms * prob.atom_scale, 1e-300)
    data_range = float(np.max(x) - np.min(x)) or 1.0
    delta = config.delta0_frac * max(tv0, 1e-12 * data_range) / floor
    f = prob.value(x, delta)
    history = [f]
    step = config.step_init
    degenerate = False

    it = 0
    while it < config.max_iters:
        it += 1
        val, g, degen = prob.value_and_gradient(x, delta)
        if degen:
            degenerate = True
            break
        gn2 = float(g @ g)
        if gn2 == 0.0:
            break
        st = step
        accepted = False
        for _ in range(config.max_backtracks):
            try:
                pres = project(x - st * g)
            except AffineBVError:
                st *= config.step_shrink
                continue
            x_new = prob.to_vector(pres.u)
            f_new = prob.value(x_new, delta)
            if f_new <= val - config.sufficient_decrease * st * gn2:
                accepted = True
                break
            st *= config.step_shrink
        if accepted:
            x, f = x_new, f_new
            step = st * 2.0
            history.append(f)
        else:
            # no decrease available at this smoothing level
            if delta <= config.delta_min:
                break
            delta = max(delta * 0.5, config.delta_min)
            f = prob.value(x, delta)
            continue
        # anneal on stagnation; the history may jump once per decrease
        w = config.stall_window
        if len(history) > w and (history[-w - 1] - history[-1]
                                 < config.stall_rel * abs(history[-w - 1])):
            if delta > config.delta_min:
                delta = max(delta * 0.5, config.delta_min)
                f = prob.value(x, delta)
            else:
                lw = config.level_window
                if len(history) > lw and (history[-lw - 1] - history[-1]
                                          < config.level_rel * abs(history[-lw - 1])):
                    break
    pres = project(x)
    return pres, history, degenerate


def minimize_level(mask, weights, cspec, config=None, quadrature=None,
                   backend=CELL_GRADIENT, consts=None, boundary_mode=None,
                   extra_starts=()):
    """Best level over multistart smoothed projected descent.

    The result's ``level`` is the nonsmooth affine functional at the final
    projected extremal; ``critical_flag`` reports the existence-threshold
    test ``0 < level < n omega_n^(1/n)``.
    """
    from .energy import make_quadrature

    config = config or MinimizeConfig()
    consts = consts or constants(mask.spec.dim)
    quadrature = quadrature or make_quadrature(mask.spec.dim, 256)
    prob = SmoothedProblem(mask, weights, quadrature, backend=backend,
                           consts=consts, boundary_mode=boundary_mode)
    rng = np.random.default_rng(config.seed)
    guesses = initial_guesses(mask, cspec, config, rng)
    for extra in extra_starts:
        guesses.append(extra)

    best = None
    histories = []
    all_degenerate = True
    for u0 in guesses:
        try:
            pres, history, degen = _descend(prob, cspec, prob.to_vector(u0), config)
        except AffineBVError:
            histories.append([])
            continue
        if degen:
            histories.append(history)
            continue
        all_degenerate = False
        level = phi_affine(pres.u, mask, weights, prob.quadrature_full,
                           backend=backend, boundary_mode=boundary_mode,
                           consts=consts)
        histories.append(history + [level])
        if best is None or level < best[0]:
            best = (level, pres)
    if best is None:
        return MinimizeResult(
            level=float("nan"), extremal=GridFunction.zeros(mask.spec),
            norm_residual=float("nan"), orth_residual=float("nan"),
            histories=histories, critical_flag=False, degenerate=all_degenerate,
            meta={"failed": True},
        )
    level, pres = best
    return MinimizeResult(
        level=level,
        extremal=pres.u,
        norm_residual=pres.norm_residual,
        orth_residual=pres.orth_residual,
        histories=histories,
        critical_flag=bool(0.0 < level < consts.sharp_sobolev),
        degenerate=False,
        meta={
            "backend": backend,
            "grid": list(mask.spec.shape),
            "dirs": quadrature.size,
            "constraint": {"q": cspec.q, "kind": cspec.kind, "r": cspec.r,
                           "zero_trace": cspec.zero_trace},
            "critical_q": cspec.is_critical(mask.spec.dim),
        },
    )


def check_critical_threshold(level, consts):
    """Existence-threshold report for a computed or synthetic level."""
    flag = bool(0.0 < level < consts.sharp_sobolev)
    return {
        "level": float(level),
        "threshold": consts.sharp_sobolev,
        "critical_flag": flag,
        "margin": float(level - consts.sharp_sobolev),
    }


# -- SL(n) normalization -----------------------------------------------------

def traceless_basis(n):
    """Basis of the n^2 - 1 dimensional space of traceless matrices."""
    basis = []
    for i in range(n):
        for j in range(n):
            if i != j:
                E = np.zeros((n, n))
                E[i, j] = 1.0
                basis.append(E)
    for k in range(n - 1):
        E = np.zeros((n, n))
        E[k, k] = 1.0
        E[k + 1, k + 1] = -1.0
        basis.append(E)
    return np.array(basis)


def sl_n_minimize_tv(atoms, n_restarts=10, seed=0, maxiter=None):
    """Minimize the total variation of the transformed atoms over SL(n).

    ``F(T) = sum_i |T^T v_i|`` with ``T = exp(A)``, A traceless.  The
    identity is always a start, so ``F(T_best) <= F(I)``.
    """
    n = atoms.dim
    basis = traceless_basis(n)
    V = atoms.atoms
    if len(V) == 0:
        raise AffineBVError("empty atom set")

    def F_params(p):
        A = np.tensordot(p, basis, axes=1)
        T = expm(A)
        return float(np.sum(np.linalg.norm(V @ T, axis=1)))

    rng = np.random.default_rng(seed)
    k = len(basis)
    starts = [np.zeros(k)]
    starts += [rng.normal(scale=0.4, size=k) for _ in range(n_restarts)]
    best_p, best_f = np.zeros(k), F_params(np.zeros(k))
    for p0 in starts:
        res = scipy_minimize(F_params, p0, method="Nelder-Mead",
                             options={"xatol": 1e-6, "fatol": 1e-10,
                                      "maxiter": maxiter or 400 * k})
        if res.fun < best_f:
            best_f, best_p = float(res.fun), res.x
    amap = AffineMap.from_generator(np.tensordot(best_p, basis, axes=1))
    return amap, best_f
