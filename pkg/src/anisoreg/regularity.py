"""Empirical checks of the quantitative regularity estimates on grid fields.

Every check evaluates both sides of one estimate, reports which branch of the
estimate applies, and returns the smallest constant that makes the displayed
inequality hold on the given field.  ``ess sup``/``ess inf`` are nodal max/min.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Sequence

import numpy as np

from .field import ScalarField
from .geometry import (ContainmentError, GeometryError, Polydisc, SplitPoint, polydisc_mask,
                       region_stats, sublevel_measure, twop_dist)
from .params import StructureParams, chi, harmonic_mean, intrinsic_theta, lambda_l


class RegularityError(ValueError):
    """Raised when a check is called outside the range where its estimate is stated."""


@dataclass
class RegularityReport:
    check: str
    point: tuple[float, ...]
    branch: str
    constants: dict[str, float] = dc_field(default_factory=dict)
    hypothesis: bool = True
    passed: bool = True
    scales: dict[str, float] = dc_field(default_factory=dict)
    notes: dict[str, float] = dc_field(default_factory=dict)

    def key(self) -> tuple:
        return (self.check, self.point, tuple(sorted(self.scales.items())))


def _split_point(params: StructureParams, x) -> SplitPoint:
    return x if isinstance(x, SplitPoint) else SplitPoint.from_coords(x, params.s)


def _require_inside(u: ScalarField, region: Polydisc, what: str) -> None:
    if not region.inside(u.grid):
        raise ContainmentError(f"{what} is not contained in the grid domain")


def _node_values(u: ScalarField, region: Polydisc) -> np.ndarray:
    vals = u.values[polydisc_mask(u.grid, region)]
    if vals.size == 0:
        raise GeometryError("region does not contain any grid node")
    return vals


def _ratio(lhs: float, rhs: float) -> float:
    if lhs <= 0:
        return 0.0
    return lhs / rhs if rhs > 0 else math.inf


# ---------------------------------------------------------------- boundedness

def sup_bound_check(u: ScalarField, params: StructureParams, center, theta: float, rho: float,
                    l: float = 1.0) -> RegularityReport:
    """Local sup bound by the ``l``-th power average over ``Q_{theta,rho}``.

    The alternative ``(theta^2/rho^p)^(1/(2-p)) <= C rho`` uses the structure
    constant ``params.C`` (so it never fires for the homogeneous equation).
    """
    lam = lambda_l(params, l)
    if lam <= 0:
        raise RegularityError(f"lambda_l = {lam} <= 0: boundedness estimate not available")
    c = _split_point(params, center)
    p, N, s = params.p, params.N, params.s
    _require_inside(u, Polydisc(c, 2 * theta, 2 * rho), "Q_{2theta,2rho}")
    scales = {"theta": theta, "rho": rho, "l": l}
    alt = (theta ** 2 / rho ** p) ** (1.0 / (2.0 - p))
    if alt <= params.C * rho:
        return RegularityReport("supbound", tuple(c.coords), "alternative", scales=scales)
    lhs = float(_node_values(u, Polydisc(c, theta / 2, rho / 2)).max())
    avg = float(np.mean(np.maximum(_node_values(u, Polydisc(c, theta, rho)), 0.0) ** l))
    pbar = harmonic_mean(params)
    first = (rho ** p / theta ** 2) ** ((N - s) / p * pbar / lam) * avg ** (pbar / lam)
    gamma = _ratio(lhs, first + alt)
    return RegularityReport("supbound", tuple(c.coords), "main",
                            constants={"gamma_hat": gamma},
                            passed=math.isfinite(gamma), scales=scales,
                            notes={"lhs": lhs, "first_term": first, "second_term": alt})


def _block_masks(u: ScalarField, c: SplitPoint, theta: float, rho: float):
    """Node masks of ``B_theta(c')`` on the prime axes and ``B_rho(c'')`` on the others."""
    g = u.grid
    s = g.split
    cp, cd = c.coords[:s], c.coords[s:]
    prime = np.meshgrid(*[g.axis_coords(a) for a in range(s)], indexing="ij")
    dprime = np.meshgrid(*[g.axis_coords(a) for a in range(s, g.ndim)], indexing="ij")
    r1 = np.sqrt(sum((x - cp[i]) ** 2 for i, x in enumerate(prime)))
    r2 = np.sqrt(sum((x - cd[i]) ** 2 for i, x in enumerate(dprime)))
    return r1 < theta, r2 < rho


def slice_integrals(u: ScalarField, center, theta: float, rho: float) -> np.ndarray:
    """``int_{B_rho(c'')} u(x', .) dx''`` (midpoint rule) for every node ``x'`` in ``B_theta(c')``."""
    g = u.grid
    s = g.split
    c = center if isinstance(center, SplitPoint) else SplitPoint.from_coords(center, s)
    m1, m2 = _block_masks(u, c, theta, rho)
    if not m1.any() or not m2.any():
        raise GeometryError("slice region does not contain any grid node")
    flat = u.values.reshape(int(np.prod(g.dims[:s])), -1)
    cell = float(np.prod(g.spacing[s:]))
    return flat[m1.ravel()][:, m2.ravel()].sum(axis=1) * cell


def l1_linf_check(u: ScalarField, params: StructureParams, xbar, theta: float,
                  rho: float) -> RegularityReport:
    """Sup over ``Q_{theta/2,rho/2}`` against the smallest singular-slice integral."""
    x = chi(params)
    if x <= 0:
        raise RegularityError(f"chi = {x} <= 0: the L1-Linf form needs the supercritical range")
    if np.min(u.values) < 0:
        raise RegularityError("the L1-Linf estimate is stated for nonnegative fields")
    c = _split_point(params, xbar)
    p, N, s = params.p, params.N, params.s
    _require_inside(u, Polydisc(c, 8 * theta, 8 * rho), "Q_{8theta,8rho}")
    scales = {"theta": theta, "rho": rho}
    alt = (theta ** 2 / rho ** p) ** (1.0 / (2.0 - p))
    if alt <= rho:
        return RegularityReport("l1linf", tuple(c.coords), "alternative", scales=scales)
    lhs = float(_node_values(u, Polydisc(c, theta / 2, rho / 2)).max())
    slices = slice_integrals(u, c, theta / 2, 2 * rho)
    inner = float(slices.min())
    first = (rho ** p / theta ** 2) ** ((N - s) / x) * rho ** (s - N) * inner ** (p / x)
    gamma = _ratio(lhs, first + alt)
    return RegularityReport("l1linf", tuple(c.coords), "main",
                            constants={"gamma_hat": gamma}, passed=math.isfinite(gamma),
                            scales=scales,
                            notes={"lhs": lhs, "slice_inf": inner, "first_term": first,
                                   "second_term": alt})


# ---------------------------------------------------------------- expansion of positivity

def expansion_check(u: ScalarField, params: StructureParams, xbar, M: float, rho: float,
                    nu: float, delta: float, K: float = 1.0, scan_depth: int = 40) -> RegularityReport:
    """Largest dyadic ``delta_o`` with ``u >= delta_o M / 2`` on ``Q_{eta,2rho}``.

    ``eta = (2 rho)^(p/2) (delta_o M)^((2-p)/2)`` is recomputed per candidate;
    parts of ``Q_{eta,2rho}`` outside the grid are clipped (recorded in notes).
    """
    if not (M > 0 and rho > 0 and 0 < nu < 1 and 0 < delta < 1):
        raise RegularityError("expansion_check needs M, rho > 0 and nu, delta in (0, 1)")
    c = _split_point(params, xbar)
    p = params.p
    theta = rho ** (p / 2) * (delta * M) ** ((2 - p) / 2)
    _require_inside(u, Polydisc(c, 2 * theta, 2 * rho), "Q_{2theta,2rho}")
    region = Polydisc(c, theta, rho)
    stats = region_stats(u, region)
    low = sublevel_measure(u, region, M)
    scales = {"M": M, "rho": rho, "theta": theta, "nu": nu, "delta": delta}
    notes = {"sublevel_fraction": low / stats.measure}
    hyp = low <= (1.0 - nu) * stats.measure
    if not hyp:
        return RegularityReport("expansion", tuple(c.coords), "main", hypothesis=False,
                                passed=True, scales=scales, notes=notes)
    if M <= K * rho:
        return RegularityReport("expansion", tuple(c.coords), "alternative", scales=scales,
                                notes=notes)
    for j in range(scan_depth + 1):
        d = 2.0 ** -j
        eta = (2 * rho) ** (p / 2) * (d * M) ** ((2 - p) / 2)
        target = Polydisc(c, eta, 2 * rho)
        st = region_stats(u, target)
        if st.inf >= d * M / 2:
            notes.update(eta=eta, clipped_fraction=st.clipped_fraction, inf=st.inf)
            return RegularityReport("expansion", tuple(c.coords), "main",
                                    constants={"delta_o_hat": d}, scales=scales, notes=notes)
    return RegularityReport("expansion", tuple(c.coords), "main", passed=False,
                            scales=scales, notes=notes)


# ---------------------------------------------------------------- Harnack

def harnack_estimate(u: ScalarField, params: StructureParams, x_o, rho: float,
                     delta_bar: float = 1.0) -> RegularityReport:
    """``K_hat = u(x_o) / inf_{Q_{theta,rho}(x_o)} u`` with intrinsic ``theta``."""
    x = chi(params)
    if x <= 0:
        raise RegularityError(f"chi = {x} <= 0: Harnack estimate needs the supercritical range")
    c = _split_point(params, x_o)
    p = params.p
    u_o = u.value_at(c.coords)
    if not u_o > 0:
        raise RegularityError(f"u(x_o) = {u_o} must be positive")
    uinf = u.sup_norm()
    height = intrinsic_theta(uinf, rho, p, 1.0)
    _require_inside(u, Polydisc(c, height, rho), "Q_{Mcal,rho}")
    theta = intrinsic_theta(u_o, rho, p, delta_bar)
    inf = min(float(_node_values(u, Polydisc(c, theta, rho)).min()), u_o)
    scales = {"rho": rho, "theta": theta, "delta_bar": delta_bar}
    if inf <= 0:
        return RegularityReport("harnack", tuple(c.coords), "main",
                                constants={"K_hat": math.inf}, passed=False, scales=scales,
                                notes={"u_center": u_o, "inf": inf})
    K = u_o / inf
    return RegularityReport("harnack", tuple(c.coords), "main", constants={"K_hat": K},
                            scales=scales,
                            notes={"u_center": u_o, "inf": inf,
                                   "alternative_explains": float(u_o <= K * rho)})


# ---------------------------------------------------------------- oscillation decay

def boundary_points(u: ScalarField) -> np.ndarray:
    g = u.grid
    return g.points()[g.boundary_mask().ravel()]


def osc_decay(u: ScalarField, params: StructureParams, y_o, K: float, delta_bar: float = 1.0,
              compact: np.ndarray | None = None, min_cells: int = 3) -> RegularityReport:
    """Oscillation over nested intrinsic polydiscs against ``delta^n omega_o``.

    ``R`` is half the (2,p)-distance from ``compact`` (default ``{y_o}``) to the
    boundary nodes; ``delta = 4K / (4K + 1)``.  Levels stop once a polydisc
    spans fewer than ``min_cells`` cells along some axis.
    """
    if K <= 1:
        raise RegularityError("K must exceed 1")
    c = _split_point(params, y_o)
    p = params.p
    g = u.grid
    uinf = u.sup_norm()
    delta = 4 * K / (4 * K + 1)
    compact = np.atleast_2d(c.coords) if compact is None else np.atleast_2d(compact)
    if uinf == 0:
        return RegularityReport("oscdecay", tuple(c.coords), "degenerate",
                                constants={"delta": delta, "delta_hat": 0.0})
    omega = 2 * uinf
    R = twop_dist(compact, boundary_points(u), uinf, p, params.s) / 2
    if not R > 0:
        raise ContainmentError("y_o lies on the boundary")
    theta0 = delta_bar * R ** (p / 2) * omega ** ((2 - p) / 2)
    _require_inside(u, Polydisc(c, theta0, R), "Q_0 (y_o too close to the boundary)")
    hp = min(g.spacing[:params.s])
    hd = min(g.spacing[params.s:])
    oscs, bounds = [], []
    n = 0
    while True:
        rho_n = delta ** n * R
        omega_n = delta ** n * omega
        theta_n = delta_bar * rho_n ** (p / 2) * omega_n ** ((2 - p) / 2)
        if 2 * theta_n < min_cells * hp or 2 * rho_n < min_cells * hd:
            break
        oscs.append(float(np.ptp(_node_values(u, Polydisc(c, theta_n, rho_n)))))
        bounds.append(omega_n)
        n += 1
    ok = all(o <= b * (1 + 1e-12) for o, b in zip(oscs, bounds))
    ratios = [b / a for a, b in zip(oscs, oscs[1:]) if a > 0]
    delta_hat = max(ratios) if ratios else 0.0
    notes = {"R": R, "omega_o": omega, "theta_0": theta0,
             "theta_0_printed": 2 ** ((p - 2) / 2) * theta0}
    notes.update({f"osc_{i}": o for i, o in enumerate(oscs)})
    return RegularityReport("oscdecay", tuple(c.coords), "main",
                            constants={"delta": delta, "delta_hat": delta_hat,
                                       "levels": float(len(oscs))},
                            passed=ok and len(oscs) > 0, scales={"K": K, "delta_bar": delta_bar},
                            notes=notes)


# ---------------------------------------------------------------- Hölder fit

def _region_mask(u: ScalarField, region: Polydisc) -> np.ndarray:
    g = u.grid
    mask = np.asarray(polydisc_mask(g, region))
    if np.any(mask & g.boundary_mask()):
        raise ContainmentError("K region touches the grid boundary")
    if not mask.any():
        raise GeometryError("K region contains no grid node")
    return mask


def sample_pairs(mask: np.ndarray, count: int, rng: np.random.Generator,
                 mode: str = "any", s: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Random node pairs inside ``mask`` with log-uniformly distributed separation.

    Returns flat node indices.  ``mode="doubleprime"`` keeps the prime index
    fixed (pure singular-direction pairs), ``mode="prime"`` the converse.
    """
    dims = np.asarray(mask.shape)
    nodes = np.argwhere(mask)
    levels = int(np.ceil(np.log2(dims.max()))) + 1
    moving = np.ones(len(dims), dtype=bool)
    if mode == "doubleprime":
        moving[:s] = False
    elif mode == "prime":
        moving[s:] = False
    first, second = [], []
    have = 0
    while have < count:
        batch = 4 * (count - have) + 16
        a = nodes[rng.integers(0, len(nodes), size=batch)]
        reach = 2 ** rng.integers(0, levels, size=(batch, 1))
        step = rng.integers(-reach, reach + 1, size=(batch, len(dims))) * moving
        b = a + step
        ok = np.all((b >= 0) & (b < dims), axis=1) & np.any(step != 0, axis=1)
        b = np.where(ok[:, None], b, 0)
        ok &= mask[tuple(b.T)]
        first.append(np.ravel_multi_index(tuple(a[ok].T), mask.shape))
        second.append(np.ravel_multi_index(tuple(b[ok].T), mask.shape))
        have += int(ok.sum())
    return np.concatenate(first)[:count], np.concatenate(second)[:count]


def intrinsic_distance(x: np.ndarray, y: np.ndarray, uinf: float, p: float, s: int) -> np.ndarray:
    a = np.linalg.norm(x[:, :s] - y[:, :s], axis=1)
    b = np.linalg.norm(x[:, s:] - y[:, s:], axis=1)
    return a ** (2 / p) * uinf ** ((p - 2) / p) + b


def _pair_data(u: ScalarField, params: StructureParams, K_region: Polydisc, count: int,
               seed: int, mode: str):
    mask = _region_mask(u, K_region)
    pts = u.grid.points()
    uinf = u.sup_norm()
    dist = twop_dist(pts[mask.ravel()], boundary_points(u), uinf, params.p, params.s)
    i, j = sample_pairs(mask, count, np.random.default_rng(seed), mode, params.s)
    D = intrinsic_distance(pts[i], pts[j], uinf, params.p, params.s) / dist
    vals = u.values.ravel()
    return D, np.abs(vals[i] - vals[j]), uinf, dist


def _all_pairs_gamma(u: ScalarField, params: StructureParams, mask: np.ndarray, alpha: float,
                     uinf: float, dist: float, chunk: int = 2_000_000) -> float:
    """``max |u(x)-u(y)| / (||u|| (D/dist)^alpha)`` over every node pair in ``mask``."""
    pts = u.grid.points()[mask.ravel()]
    vals = u.values.ravel()[mask.ravel()]
    rows = max(1, chunk // len(pts))
    best = 0.0
    for a in range(0, len(pts) - 1, rows):
        x, ux = pts[a:a + rows], vals[a:a + rows]
        xs = np.repeat(x, len(pts), axis=0)
        ys = np.tile(pts, (len(x), 1))
        D = intrinsic_distance(xs, ys, uinf, params.p, params.s) / dist
        du = np.abs(ux[:, None] - vals[None, :]).ravel()
        pos = D > 0
        if pos.any():
            best = max(best, float(np.max(du[pos] / (uinf * D[pos] ** alpha))))
    return best


def holder_fit(u: ScalarField, params: StructureParams, K_region: Polydisc, pair_count: int = 1000,
               seed: int = 0, mode: str = "any",
               exhaustive_limit: int = 20_000_000) -> RegularityReport:
    """Fit ``alpha, gamma`` in ``|u(x)-u(y)| <= gamma ||u|| (D(x,y)/dist)^alpha``.

    ``alpha`` comes from least squares in log-log coordinates over the sampled
    pairs.  ``gamma`` is then the smallest value making every node pair of the
    region satisfy the bound, or every sampled pair when the region has more
    than ``exhaustive_limit`` pairs.
    """
    if pair_count < 100:
        raise RegularityError("holder_fit needs at least 100 pairs")
    mask = _region_mask(u, K_region)
    center = tuple(K_region.center.coords)
    osc = float(np.ptp(u.values[mask]))
    if osc == 0:
        return RegularityReport("holder", center, "degenerate", constants={"osc": 0.0})
    D, du, uinf, dist = _pair_data(u, params, K_region, pair_count, seed, mode)
    use = du > 0
    if use.sum() < 2:
        return RegularityReport("holder", center, "degenerate", constants={"osc": osc})
    alpha = float(np.polyfit(np.log(D[use]), np.log(du[use] / uinf), 1)[0])
    gamma = float(np.max(du / (uinf * D ** alpha)))
    nodes = int(mask.sum())
    source = "sample"
    if math.isfinite(alpha) and nodes * (nodes - 1) // 2 <= exhaustive_limit:
        gamma = max(gamma, _all_pairs_gamma(u, params, mask, alpha, uinf, dist))
        source = "all_pairs"
    ok = math.isfinite(alpha) and math.isfinite(gamma) and alpha > 0
    return RegularityReport("holder", center, "main",
                            constants={"alpha_hat": alpha, "gamma_hat": gamma,
                                       "alpha_candidate": params.p / 2},
                            passed=ok, scales={"theta": K_region.theta, "rho": K_region.rho},
                            notes={"dist": dist, "pairs": float(len(D)), "gamma_source": source})


def holder_validate(u: ScalarField, params: StructureParams, K_region: Polydisc, alpha: float,
                    gamma: float, pair_count: int = 1000, seed: int = 1,
                    slack: float = 1.1) -> float:
    """Fraction of fresh pairs satisfying the fitted bound with ``slack * gamma``."""
    D, du, uinf, _ = _pair_data(u, params, K_region, pair_count, seed, "any")
    return float(np.mean(du <= slack * gamma * uinf * D ** alpha))


# ---------------------------------------------------------------- sweeps

def dyadic_radii(j_min: int, j_max: int) -> list[float]:
    return [2.0 ** -j for j in range(j_min, j_max + 1)]


def run_sweep(jobs: Iterable[tuple[tuple, Callable[[], RegularityReport]]],
              threads: int = 1) -> list[tuple[tuple, RegularityReport | None]]:
    """Evaluate keyed jobs and return results sorted by key.

    Jobs raising :class:`ContainmentError` are inadmissible and yield ``None``.
    """
    jobs = list(jobs)

    def run(job):
        key, fn = job
        try:
            return key, fn()
        except ContainmentError:
            return key, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    return sorted(results, key=lambda kv: kv[0])
