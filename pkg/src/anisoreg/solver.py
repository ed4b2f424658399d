"""Discrete weak solutions of the (2, p) anisotropic equation.

Discretization: forward differences on cell faces.  For an interior node ``n``
the residual is

    sum_{i<=s} (D_i u)_{n+1/2} - (D_i u)_{n-1/2}) / h_i
  + sum_{i>s}  (A(D_i u)_{n+1/2} - A(D_i u)_{n-1/2}) / h_i

which is exactly ``-1/vol`` times the gradient of the discrete energy, so the
weak form and the residual are a summation-by-parts pair.

The singular flux is regularized as ``a(x) (eps^2 + xi^2)^((p-2)/2) xi``.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import BoundaryData, Grid, ScalarField
from .geometry import ContainmentError, Polydisc, SplitPoint
from .params import StructureParams

log = logging.getLogger(__name__)


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class FluxModel:
    """Singular-direction flux ``A_i(x, u, xi) = a(x) (eps^2 + xi_i^2)^((p-2)/2) xi_i``.

    ``coefficient`` maps face-midpoint coordinates (a list of broadcastable
    arrays, one per axis) to values in ``[a_min, a_max]``; ``None`` is the
    prototype ``a = 1``.
    """

    p: float
    epsilon: float = 1e-8
    coefficient: Callable[..., np.ndarray] | None = None
    a_min: float = 1.0
    a_max: float = 1.0
    name: str = "prototype"

    def __post_init__(self):
        if not 1 < self.p < 2:
            raise SolverError(f"flux exponent must lie in (1, 2), got {self.p}")
        if self.epsilon < 0:
            raise SolverError("epsilon must be nonnegative")
        if not 0 < self.a_min <= self.a_max:
            raise SolverError("need 0 < a_min <= a_max")

    def with_epsilon(self, epsilon: float) -> "FluxModel":
        return replace(self, epsilon=float(epsilon))

    def coeff(self, coords: Sequence[np.ndarray]) -> np.ndarray | float:
        if self.coefficient is None:
            return 1.0
        return self.coefficient(*coords)

    # structure constants implied by the regularized form
    @property
    def C1(self) -> float:
        return self.a_min * 2.0 ** ((self.p - 2.0) / 2.0)

    @property
    def C2(self) -> float:
        return self.a_max

    def C(self, n_singular: int) -> float:
        return n_singular * self.a_max * self.epsilon ** self.p

    def flux(self, xi, a=1.0):
        e2 = self.epsilon ** 2
        if e2 == 0.0:
            mag = np.abs(xi)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(mag > 0, mag ** (self.p - 1.0) * np.sign(xi), 0.0)
            return a * out
        return a * (e2 + xi * xi) ** ((self.p - 2.0) / 2.0) * xi

    def dflux(self, xi, a=1.0):
        e2 = max(self.epsilon ** 2, 1e-300)
        r = e2 + xi * xi
        return a * r ** ((self.p - 4.0) / 2.0) * (e2 + (self.p - 1.0) * xi * xi)

    def secant(self, xi, a=1.0):
        """``A(xi)/xi``: the weight of the quadratic majorant of the potential (p < 2)."""
        e2 = max(self.epsilon ** 2, 1e-300)
        return a * (e2 + xi * xi) ** ((self.p - 2.0) / 2.0)

    def potential(self, xi, a=1.0):
        e = self.epsilon
        return a * ((e * e + xi * xi) ** (self.p / 2.0) - e ** self.p) / self.p


def prototype_flux(p: float, epsilon: float = 1e-8) -> FluxModel:
    return FluxModel(p=p, epsilon=epsilon)


def check_structure(flux: FluxModel, n_singular: int, samples: int = 2000, seed: int = 0,
                    scale: float = 10.0) -> dict:
    """Sample coercivity and growth of the singular block.

    Returns the sampled worst margins; both must be ``>= 0`` (up to rounding)
    for the flux to belong to the structure class with constants
    ``(flux.C1, flux.C2, flux.C(n_singular))``.
    """
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((samples, n_singular)) * scale * rng.random((samples, 1)) ** 3
    a_lo = np.full_like(xi, flux.a_min)
    a_hi = np.full_like(xi, flux.a_max)
    worst_coercive = math.inf
    worst_growth = math.inf
    for a in (a_lo, a_hi):
        A = flux.flux(xi, a)
        lhs = np.sum(A * xi, axis=1)
        rhs = flux.C1 * np.sum(np.abs(xi) ** flux.p, axis=1) - flux.C(n_singular)
        worst_coercive = min(worst_coercive, float(np.min(lhs - rhs)))
        growth = flux.C2 * np.abs(xi) ** (flux.p - 1.0) + flux.C(n_singular) - np.abs(A)
        worst_growth = min(worst_growth, float(np.min(growth)))
    return {"coercivity_margin": worst_coercive, "growth_margin": worst_growth,
            "ok": worst_coercive >= -1e-12 and worst_growth >= -1e-12}


@dataclass(frozen=True)
class SolverConfig:
    tol_residual: float = 1e-7
    tol_energy: float = 1e-15
    max_sweeps: int = 200
    epsilon: float | None = None
    seed: int = 0
    method: str = "newton"

    def __post_init__(self):
        if not (self.tol_residual > 0 and self.tol_energy > 0):
            raise SolverError("solver tolerances must be positive")
        if self.max_sweeps < 1:
            raise SolverError("max_sweeps must be >= 1")
        if self.method not in ("newton", "gauss-seidel"):
            raise SolverError(f"unknown method {self.method!r}")


@dataclass
class SolveReport:
    sweeps: int
    residual: float
    energy: float
    converged: bool
    wall_time: float
    energy_history: list[float] = dc_field(default_factory=list)
    residual_history: list[float] = dc_field(default_factory=list)


# ------------------------------------------------------------------ discrete operators

def _axis_slices(ndim: int, axis: int):
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def _face_weights(grid: Grid, axis: int) -> np.ndarray:
    """Cell volume times trapezoid weights in the directions transverse to ``axis``."""
    w = np.full([n - 1 if a == axis else n for a, n in enumerate(grid.dims)], grid.cell_volume)
    for b in range(grid.ndim):
        if b == axis:
            continue
        sl = [slice(None)] * grid.ndim
        sl[b] = 0
        w[tuple(sl)] *= 0.5
        sl[b] = -1
        w[tuple(sl)] *= 0.5
    return w


def _face_coords(grid: Grid, axis: int) -> list[np.ndarray]:
    coords = []
    for a in range(grid.ndim):
        x = grid.axis_coords(a)
        if a == axis:
            x = x[:-1] + 0.5 * grid.spacing[a]
        shape = [1] * grid.ndim
        shape[a] = len(x)
        coords.append(x.reshape(shape))
    return coords


def _face_slopes(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    return np.diff(values, axis=axis) / grid.spacing[axis]


def _face_fluxes(values: np.ndarray, grid: Grid, flux: FluxModel, s: int):
    """Yield ``(axis, slope, face_flux)`` for every axis."""
    for axis in range(grid.ndim):
        xi = _face_slopes(values, grid, axis)
        if axis < s:
            yield axis, xi, xi
        else:
            yield axis, xi, flux.flux(xi, flux.coeff(_face_coords(grid, axis)))


def energy(field: ScalarField, params: StructureParams, epsilon: float = 0.0,
           flux: FluxModel | None = None) -> float:
    """Discrete anisotropic energy with trapezoid weights over the grid box.

    Nondegenerate faces carry ``xi^2/2``; singular faces carry ``|xi|^p / p``
    (regularized and shifted to vanish at ``xi = 0`` when ``epsilon > 0``).
    """
    g = field.grid
    if flux is None:
        flux = FluxModel(p=params.p, epsilon=epsilon)
    total = 0.0
    for axis in range(g.ndim):
        xi = _face_slopes(field.values, g, axis)
        w = _face_weights(g, axis)
        if axis < params.s:
            total += float(np.sum(w * 0.5 * xi * xi))
        else:
            total += float(np.sum(w * flux.potential(xi, flux.coeff(_face_coords(g, axis)))))
    return total


def residual(field: ScalarField, flux: FluxModel, params: StructureParams,
             laplace_coeff: float = 1.0) -> ScalarField:
    """Discrete divergence of the fluxes at interior nodes (boundary entries are zero)."""
    g = field.grid
    if g.split != params.s:
        raise SolverError("grid split and params.s disagree")
    res = np.zeros(g.dims)
    inner = g.interior_slice()
    for axis, _xi, F in _face_fluxes(field.values, g, flux, params.s):
        div = np.diff(F, axis=axis) / g.spacing[axis]
        if axis < params.s:
            div = laplace_coeff * div
        sl = list(inner)
        sl[axis] = slice(None)
        res[inner] += div[tuple(sl)]
    return ScalarField(g, res)


def weak_form(field: ScalarField, psi: ScalarField, flux: FluxModel, params: StructureParams) -> float:
    """``sum_faces w * F(D u) * D psi``: the discrete left side of the weak formulation."""
    g = field.grid
    total = 0.0
    for axis, _xi, F in _face_fluxes(field.values, g, flux, params.s):
        dpsi = _face_slopes(psi.values, g, axis)
        total += float(np.sum(_face_weights(g, axis) * F * dpsi))
    return total


def inner(a: ScalarField, b: ScalarField) -> float:
    """Volume-weighted nodal inner product."""
    return float(np.sum(a.values * b.values)) * a.grid.cell_volume


# ------------------------------------------------------------------ solver internals

class _Problem:
    """Energy, gradient and Hessian of ``E(u) + vol * sum f u`` over interior unknowns."""

    def __init__(self, grid: Grid, bc: BoundaryData, flux: FluxModel, s: int,
                 forcing: np.ndarray | None):
        self.grid = grid
        self.flux = flux
        self.s = s
        self.bc = bc
        self.free = ~bc.mask
        self.forcing = np.zeros(grid.dims) if forcing is None else np.where(self.free, forcing, 0.0)
        self.vol = grid.cell_volume
        self.weights = [_face_weights(grid, a) for a in range(grid.ndim)]
        self.coeffs = [flux.coeff(_face_coords(grid, a)) if a >= s else 1.0 for a in range(grid.ndim)]
        n = int(np.prod(grid.dims))
        self.index = np.arange(n).reshape(grid.dims)
        self.free_flat = np.flatnonzero(self.free.ravel())
        self.pairs = []
        for a in range(grid.ndim):
            lo, hi = _axis_slices(grid.ndim, a)
            self.pairs.append((self.index[lo].ravel(), self.index[hi].ravel()))

    def objective(self, u: np.ndarray) -> float:
        total = 0.0
        for a in range(self.grid.ndim):
            xi = _face_slopes(u, self.grid, a)
            if a < self.s:
                total += float(np.sum(self.weights[a] * 0.5 * xi * xi))
            else:
                total += float(np.sum(self.weights[a] * self.flux.potential(xi, self.coeffs[a])))
        return total + self.vol * float(np.sum(self.forcing * u))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        grad = self.vol * self.forcing.copy()
        for a in range(self.grid.ndim):
            xi = _face_slopes(u, self.grid, a)
            F = xi if a < self.s else self.flux.flux(xi, self.coeffs[a])
            G = self.weights[a] * F / self.grid.spacing[a]
            lo, hi = _axis_slices(self.grid.ndim, a)
            grad[lo] -= G
            grad[hi] += G
        return np.where(self.free, grad, 0.0)

    def hessian(self, u: np.ndarray, kind: str) -> sp.csr_matrix:
        rows, cols, data = [], [], []
        for a in range(self.grid.ndim):
            xi = _face_slopes(u, self.grid, a)
            if a < self.s:
                d2 = np.ones_like(xi)
            elif kind == "newton":
                d2 = self.flux.dflux(xi, self.coeffs[a])
            elif kind == "secant":
                d2 = self.flux.secant(xi, self.coeffs[a])
            else:
                d2 = np.ones_like(xi)
            w = (self.weights[a] * np.broadcast_to(d2, xi.shape) / self.grid.spacing[a] ** 2).ravel()
            i, j = self.pairs[a]
            rows += [i, j, i, j]
            cols += [i, j, j, i]
            data += [w, w, -w, -w]
        n = self.index.size
        H = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
        f = self.free_flat
        return H[f][:, f].tocsc()

    def strong_residual(self, u: np.ndarray) -> float:
        """Max-norm of ``residual(u) - f`` over interior nodes."""
        g = self.gradient(u)
        return float(np.max(np.abs(g))) / self.vol if g.size else 0.0

    def solve_step(self, u: np.ndarray, kind: str) -> np.ndarray:
        H = self.hessian(u, kind)
        g = self.gradient(u).ravel()[self.free_flat]
        d = np.zeros(u.size)
        d[self.free_flat] = spla.spsolve(H, -g)
        return d.reshape(u.shape)


def _validate(grid: Grid, bc: BoundaryData, flux: FluxModel, cfg: SolverConfig):
    if not 1 < flux.p < 2:
        raise SolverError(f"solver requires 1 < p < 2, got {flux.p}")
    if bc.grid != grid:
        raise SolverError("boundary data belongs to a different grid")
    if cfg.epsilon is not None:
        flux = flux.with_epsilon(cfg.epsilon)
    return flux


def _line_search(problem: _Problem, u, d, J, slope, res, noise):
    """Backtrack to the Armijo condition, then keep halving while the energy drops.

    Returns ``(t, J(u + t d))`` or ``None``.
    """
    t = 1.0
    while t > 1e-12:
        Jt = problem.objective(u + t * d)
        if Jt <= J + 1e-4 * t * slope:
            break
        if Jt <= J + noise and abs(slope) * t <= noise:
            # change is below rounding: accept only on a residual drop
            if problem.strong_residual(u + t * d) < res:
                return t, Jt
        t *= 0.5
    else:
        return None
    while t > 1e-12:
        Jh = problem.objective(u + 0.5 * t * d)
        if not Jh < Jt:
            break
        t, Jt = 0.5 * t, Jh
    return t, Jt


def _newton(problem: _Problem, cfg: SolverConfig, u: np.ndarray, report: SolveReport) -> np.ndarray:
    """Damped Newton on the convex objective; the secant (Kacanov) step competes
    whenever the Newton step is far from its quadratic-model decrease."""
    J = problem.objective(u)
    res = problem.strong_residual(u)
    report.energy_history.append(J)
    report.residual_history.append(res)
    first = report.sweeps
    for sweep in range(first + 1, first + cfg.max_sweeps + 1):
        if res <= cfg.tol_residual:
            break
        g = problem.gradient(u)
        noise = cfg.tol_energy * max(1.0, abs(J))
        best = None
        for kind in ("newton", "secant"):
            d = problem.solve_step(u, kind)
            slope = float(np.sum(g * d))
            if not slope < 0:
                continue
            found = _line_search(problem, u, d, J, slope, res, noise)
            if found is None:
                continue
            t, Jt = found
            if best is None or Jt < best[0]:
                best = (Jt, u + t * d)
            if kind == "newton" and t == 1.0 and J - Jt >= 0.4 * abs(slope):
                break  # quadratic regime
        report.sweeps = sweep
        if best is None:
            log.warning("line search stalled at residual %.3e", res)
            break
        J, u = best
        res = problem.strong_residual(u)
        report.energy_history.append(J)
        report.residual_history.append(res)
        hist = report.residual_history
        if len(hist) > 10 and min(hist[-8:]) > 0.5 * hist[-9]:
            log.warning("residual stagnated at %.3e (rounding floor)", res)
            break
    report.converged = res <= cfg.tol_residual
    report.residual = res
    report.energy = problem.objective(u)
    return u


def _continuation(problem: _Problem, cfg: SolverConfig, u: np.ndarray, report: SolveReport) -> np.ndarray:
    """Warm start by Newton solves with a decreasing sequence of regularizations.

    The iterates are discarded from the energy history: only the final
    regularization defines the objective.
    """
    target = problem.flux.epsilon
    span = float(np.ptp(problem.bc.boundary_values()))
    extent = float(np.min(problem.grid.upper - problem.grid.lower))
    eps = max(0.1 * span / extent, 10.0 * target)
    flux = problem.flux
    sweeps = 0
    while eps > 10.0 * target and sweeps < cfg.max_sweeps:
        problem.flux = flux.with_epsilon(eps)
        stage = SolveReport(0, math.inf, math.nan, False, 0.0)
        stage_cfg = replace(cfg, tol_residual=max(cfg.tol_residual, 1e-6 * (1.0 + span)),
                            max_sweeps=max(1, min(30, cfg.max_sweeps - sweeps)))
        u = _newton(problem, stage_cfg, u, stage)
        sweeps += stage.sweeps
        eps *= 0.01
    problem.flux = flux
    report.sweeps = sweeps
    return u


def _gauss_seidel(problem: _Problem, cfg: SolverConfig, u: np.ndarray, report: SolveReport) -> np.ndarray:
    """Red-black nonlinear Gauss-Seidel with the secant (majorizer) local update.

    Same-colored nodes share no face, so each half sweep updates them at once;
    the local quadratic majorant guarantees the energy never increases.
    """
    grid = problem.grid
    color = (sum(np.indices(grid.dims)) % 2).astype(bool)
    rng = np.random.default_rng(cfg.seed)
    res = problem.strong_residual(u)
    report.energy_history.append(problem.objective(u))
    report.residual_history.append(res)
    for sweep in range(1, cfg.max_sweeps + 1):
        if res <= cfg.tol_residual:
            break
        order = (True, False) if rng.random() < 0.5 else (False, True)
        for c in order:
            sel = problem.free & (color == c)
            diag = np.zeros(grid.dims)
            for a in range(grid.ndim):
                xi = _face_slopes(u, grid, a)
                d2 = np.ones_like(xi) if a < problem.s else problem.flux.secant(xi, problem.coeffs[a])
                w = problem.weights[a] * np.broadcast_to(d2, xi.shape) / grid.spacing[a] ** 2
                lo, hi = _axis_slices(grid.ndim, a)
                diag[lo] += w
                diag[hi] += w
            g = problem.gradient(u)
            u = np.where(sel, u - g / np.where(diag > 0, diag, 1.0), u)
        res = problem.strong_residual(u)
        report.sweeps = sweep
        report.energy_history.append(problem.objective(u))
        report.residual_history.append(res)
    report.converged = res <= cfg.tol_residual
    report.residual = res
    report.energy = problem.objective(u)
    return u


def _run(grid, bc, flux, cfg, forcing, initial):
    flux = _validate(grid, bc, flux, cfg)
    t0 = time.perf_counter()
    problem = _Problem(grid, bc, flux, grid.split, forcing)
    if initial is None:
        u = np.where(problem.free, 0.0, bc.values)
        u = u + problem.solve_step(u, "linear")
    else:
        u = np.where(problem.free, np.asarray(initial, dtype=float).reshape(grid.dims), bc.values)
    report = SolveReport(0, math.inf, math.nan, False, 0.0)
    bvals = bc.boundary_values()
    if forcing is None and np.all(bvals == bvals[0]):
        # constant data: the constant field is the exact discrete solution
        u = np.full(grid.dims, bvals[0])
        report.residual = float(np.max(np.abs(problem.strong_residual(u))))
        report.energy = problem.objective(u)
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return ScalarField(grid, u, flux.p), report
    if cfg.method == "newton":
        u = _continuation(problem, cfg, u, report)
        u = _newton(problem, cfg, u, report)
    else:
        u = _gauss_seidel(problem, cfg, u, report)
    report.wall_time = time.perf_counter() - t0
    return ScalarField(grid, u, flux.p), report


def solve(grid: Grid, bc: BoundaryData, flux: FluxModel, cfg: SolverConfig = SolverConfig(),
          initial: np.ndarray | None = None) -> tuple[ScalarField, SolveReport]:
    """Minimize the discrete energy with Dirichlet data ``bc``.

    Non-convergence is reported through ``report.converged``; it is not raised.
    """
    return _run(grid, bc, flux, cfg, None, initial)


def solve_forced(grid: Grid, bc: BoundaryData, flux: FluxModel, f: ScalarField | np.ndarray,
                 cfg: SolverConfig = SolverConfig(),
                 initial: np.ndarray | None = None) -> tuple[ScalarField, SolveReport]:
    """As :func:`solve`, but drives ``residual(u)`` to ``f`` at interior nodes."""
    values = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float).reshape(grid.dims)
    return _run(grid, bc, flux, cfg, values, initial)


# ------------------------------------------------------------------ normalization

@dataclass
class Normalized:
    """Zoomed field ``v(y) = u(x_o' + theta y', x_o'' + rho y'') / u(x_o)``.

    ``v`` is resampled on a fixed unit box grid; ``native`` keeps the original
    nodes (in zoomed coordinates) for exact residual evaluation.
    """

    v: ScalarField
    native: ScalarField
    C_tilde: float
    u_center: float
    theta: float
    rho: float
    scale: float
    laplace_coeff: float


def normalize_transform(u: ScalarField, x_o: SplitPoint | Sequence[float], theta: float, rho: float,
                        C: float = 0.0, n_per_axis: int = 33) -> Normalized:
    g = u.grid
    if not isinstance(x_o, SplitPoint):
        x_o = SplitPoint.from_coords(x_o, g.split)
    region = Polydisc(x_o, theta, rho)
    if not region.inside(g):
        raise ContainmentError("polydisc not contained in the grid domain")
    c = x_o.coords
    u_o = u.value_at(c)
    if not u_o > 0:
        raise SolverError(f"normalization needs u(x_o) > 0, got {u_o}")
    p = u.p
    radii = np.array([theta] * g.split + [rho] * (g.ndim - g.split))

    unit = Grid.box([n_per_axis] * g.ndim, [-1.0] * g.ndim, [1.0] * g.ndim, g.split)
    pts = c + unit.points() * radii
    pts = np.clip(pts, g.lower, g.upper)
    v = ScalarField(unit, u.interpolate(pts).reshape(unit.dims) / u_o, p)

    lo, hi = c - radii, c + radii
    h = np.asarray(g.spacing)
    kmin = np.ceil((lo - g.lower) / h - 1e-9).astype(int)
    kmax = np.floor((hi - g.lower) / h + 1e-9).astype(int)
    sl = tuple(slice(a, b + 1) for a, b in zip(kmin, kmax))
    sub = u.values[sl]
    if any(n < 3 for n in sub.shape):
        raise ContainmentError("polydisc too small to resolve on the grid")
    origin = (g.lower + kmin * h - c) / radii
    native = ScalarField(Grid(sub.shape, tuple(h / radii), tuple(origin), g.split), sub / u_o, p)

    scale = (rho ** p * u_o ** (1.0 - p)) if p is not None else math.nan
    # equals 1 for the intrinsic theta = u_o^((2-p)/2) rho^(p/2)
    lap = rho ** p * u_o ** (2.0 - p) / theta ** 2 if p is not None else math.nan
    return Normalized(v, native, C * rho / u_o, u_o, theta, rho, scale, lap)


def transformed_flux(flux: FluxModel, norm: Normalized, x_o: Sequence[float], split: int) -> FluxModel:
    """Flux of the zoomed equation: ``eps -> eps rho / u(x_o)``, coefficient pulled back."""
    c = np.asarray(x_o, dtype=float)
    radii = np.array([norm.theta] * split + [norm.rho] * (len(c) - split))
    coefficient = None
    if flux.coefficient is not None:
        def coefficient(*y, _f=flux.coefficient):
            return _f(*[c[a] + radii[a] * y[a] for a in range(len(c))])
    return replace(flux, epsilon=flux.epsilon * norm.rho / norm.u_center, coefficient=coefficient)


def transformed_residual(norm: Normalized, flux: FluxModel, params: StructureParams,
                         x_o: Sequence[float]) -> ScalarField:
    """Residual of the zoomed field, divided by ``rho^p u(x_o)^(1-p)``.

    For an exact discrete solution ``u`` this equals ``residual(u)`` on the
    same nodes, so it is bounded by the solver tolerance.
    """
    tflux = transformed_flux(flux, norm, x_o, params.s)
    r = residual(norm.native, tflux, params, laplace_coeff=norm.laplace_coeff)
    return r.with_values(r.values / norm.scale)


# ------------------------------------------------------------------ truncations

@dataclass
class TruncationReport:
    k: float
    sign: int
    values: list[float]
    slack: list[float]
    passed: bool
    failures: int


def check_truncation_subsolution(u: ScalarField, k: float, sign: int,
                                 test_functions: Sequence[ScalarField], flux: FluxModel,
                                 params: StructureParams, tol_residual: float = 1e-7) -> TruncationReport:
    """Sign of the weak form evaluated on the signed truncation ``+-(u-k)_+-``.

    ``sign=+1``: ``(u-k)_+`` must be a subsolution (weak form ``<= eta``);
    ``sign=-1``: ``-(u-k)_-`` must be a supersolution (weak form ``>= -eta``),
    with ``eta = tol_residual * ||psi||_1``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    w = u.with_values(sign * np.maximum(sign * (u.values - k), 0.0))
    mask = u.grid.boundary_mask()
    values, slack = [], []
    failures = 0
    for psi in test_functions:
        if np.any(psi.values < 0):
            raise ValueError("test functions must be nonnegative")
        if np.any(psi.values[mask] != 0):
            raise ValueError("test functions must vanish on the boundary nodes")
        I = weak_form(w, psi, flux, params)
        eta = tol_residual * float(np.sum(psi.values)) * u.grid.cell_volume
        values.append(I)
        slack.append(eta)
        ok = I <= eta if sign == 1 else I >= -eta
        failures += not ok
    return TruncationReport(k, sign, values, slack, failures == 0, failures)


def bump(grid: Grid, center: Sequence[float], radius: Sequence[float] | float) -> ScalarField:
    """Smooth nonnegative bump ``prod (1 - r^2)^2`` supported in a box; zero on the boundary."""
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (grid.ndim,))
    vals = np.ones(grid.dims)
    for a, x in enumerate(grid.coords()):
        t = (x - center[a]) / radius[a]
        vals = vals * np.where(np.abs(t) < 1, (1 - t * t) ** 2, 0.0)
    vals[grid.boundary_mask()] = 0.0
    return ScalarField(grid, vals)
