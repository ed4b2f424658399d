"""Point/radius selection balancing ``r^beta sup_{B_r(x)} u`` against ``r^beta u(x)``.

Works on finite quasi-metric spaces.  Balls are open: ``B_r(x) = {y : d(x, y) < r}``.
Containment ``B_r(x) ⊆ B_1(x0)`` is tested as inclusion of finite point sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .field import ScalarField
from .geometry import QuasiMetric, d_M


class KSError(ValueError):
    pass


@dataclass
class QuasiMetricSpace:
    """Finite point set with a pairwise distance and a base point index ``x0``."""

    points: np.ndarray
    distance: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gamma_q: float = 1.0
    x0: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not 0 <= self.x0 < len(self.points):
            raise KSError("base point index out of range")
        if self.gamma_q < 1:
            raise KSError("quasi-triangle constant must be >= 1")
        self._D = None

    @classmethod
    def from_quasimetric(cls, points, q: QuasiMetric, x0: int = 0) -> "QuasiMetricSpace":
        return cls(points, lambda a, b: d_M(a, b, q), q.gamma_q, x0)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def matrix(self) -> np.ndarray:
        """Full pairwise distance matrix (cached)."""
        if self._D is None:
            P = self.points
            self._D = np.asarray(self.distance(P[:, None, :], P[None, :, :]), dtype=float)
        return self._D

    def unit_ball(self) -> np.ndarray:
        return self.matrix[self.x0] < 1.0

    def quasi_triangle_violations(self, samples: int = 10000, seed: int = 0) -> int:
        rng = np.random.default_rng(seed)
        i, j, k = rng.integers(0, len(self), size=(3, samples))
        D = self.matrix
        return int(np.count_nonzero(D[i, k] > self.gamma_q * (D[i, j] + D[j, k]) * (1 + 1e-12)))


class KSSelection(NamedTuple):
    x: int
    r: float
    omega: float


def _balance(r, beta, sup, ux):
    with np.errstate(divide="ignore"):
        return np.maximum(r ** beta * sup, 1.0 / (r ** beta * ux))


def _certify(omega: float, r: float, beta: float, sup: float, ux: float) -> float:
    """Smallest float ``>= omega`` for which both inequalities hold as evaluated."""
    rb = r ** beta
    while rb * sup > omega or rb * ux < 1.0 / omega:
        omega = math.nextafter(omega, math.inf)
    return omega


def _values(space: QuasiMetricSpace, u) -> np.ndarray:
    u = np.asarray(u.values.ravel() if isinstance(u, ScalarField) else u, dtype=float).ravel()
    if len(u) != len(space):
        raise KSError(f"u has {len(u)} values for {len(space)} points")
    if not np.all(np.isfinite(u)):
        raise KSError("u must be bounded")
    if u[space.x0] < 1:
        raise KSError(f"u(x0) = {u[space.x0]} < 1")
    return u


def dyadic_levels(space: QuasiMetricSpace) -> list[float]:
    """``1, 1/2, ...`` down to the first radius at or below the smallest positive distance."""
    D = space.matrix
    dmin = float(D[D > 0].min()) if np.any(D > 0) else 1.0
    out = [1.0]
    while out[-1] > dmin:
        out.append(out[-1] / 2)
    return out


def ks_select(space: QuasiMetricSpace, u, beta: float = 1.0, refine: bool = False) -> KSSelection:
    """Search (center, radius) pairs for the smallest balanced ``omega``.

    Radii are dyadic.  With ``refine=True`` each center additionally tries the
    continuous optimum inside every interval on which its ball is constant.
    """
    if beta <= 0:
        raise KSError("beta must be positive")
    u = _values(space, u)
    D = space.matrix
    in_unit = D[space.x0] < 1.0
    if not in_unit.any():
        raise KSError("empty unit ball")
    best = (math.inf, space.x0, 1.0)
    for r in dyadic_levels(space):
        member = D < r
        ok = ~np.any(member & ~in_unit[None, :], axis=1) & in_unit
        if not ok.any():
            continue
        sup = np.where(member, u[None, :], -np.inf).max(axis=1)
        om = np.where(ok & (u > 0), _balance(r, beta, sup, u), np.inf)
        i = int(np.argmin(om))
        if om[i] < best[0]:
            best = (float(om[i]), i, r)
    if refine:
        best = min(best, _refine(D, u, in_unit, beta))
    if not math.isfinite(best[0]):
        raise KSError("no admissible selection (u vanishes at every admissible center)")
    omega, x, r = best
    sup = float(u[D[x] < r].max())
    return KSSelection(x, r, _certify(omega, r, beta, sup, float(u[x])))


def _refine(D, u, in_unit, beta):
    best = (math.inf, 0, 1.0)
    for i in np.flatnonzero(in_unit & (u > 0)):
        order = np.argsort(D[i], kind="stable")
        d = D[i][order]
        run_sup = np.maximum.accumulate(u[order])
        run_ok = np.logical_and.accumulate(in_unit[order])
        # ball for r in (d[k], d[k+1]] is order[:k+1]
        for k in range(len(d)):
            if not run_ok[k]:
                break
            lo = d[k]
            hi = d[k + 1] if k + 1 < len(d) else math.inf
            if hi <= lo:
                continue
            r = (run_sup[k] * u[i]) ** (-0.5 / beta)
            r = min(max(r, math.nextafter(lo, math.inf)), hi)
            om = float(_balance(r, beta, run_sup[k], u[i]))
            if om < best[0]:
                best = (om, int(i), float(r))
    return best


class WitnessResult(NamedTuple):
    ok: bool
    reason: str

    def __bool__(self) -> bool:
        return self.ok


def ks_witness_check(space: QuasiMetricSpace, u, beta: float, sel: KSSelection) -> WitnessResult:
    """Re-evaluate the three selection inequalities from scratch."""
    u = np.asarray(u.values.ravel() if isinstance(u, ScalarField) else u, dtype=float).ravel()
    P = space.points
    x = P[sel.x]
    if not sel.r > 0:
        return WitnessResult(False, "radius not positive")
    ball = np.array([space.distance(x, y) < sel.r for y in P])
    unit = np.array([space.distance(P[space.x0], y) < 1.0 for y in P])
    if np.any(ball & ~unit):
        return WitnessResult(False, "ball not contained")
    rb = sel.r ** beta
    if rb * u[ball].max() > sel.omega:
        return WitnessResult(False, "sup bound violated")
    if rb * u[sel.x] < 1.0 / sel.omega:
        return WitnessResult(False, "lower bound violated")
    return WitnessResult(True, "ok")


def ks_slice_bound(v: ScalarField, beta: float = 1.0) -> dict[str, float]:
    """Run the selection on the singular-block slice through the prime origin.

    ``v`` is a normalized field on ``[-1, 1]^N`` (prime origin at a node).  The
    slice is restricted to ``B_1(0'')`` with Euclidean distance and ``x0 = 0''``.
    Returns the selection and the two-sided bound
    ``1/(omega r^beta) <= v(0', x'') <= sup_{B_r} v <= omega r^-beta``.
    """
    g = v.grid
    s = g.split
    idx = []
    for a in range(s):
        ax = g.axis_coords(a)
        k = int(np.argmin(np.abs(ax)))
        if abs(ax[k]) > 1e-12:
            raise KSError("prime origin is not a grid node")
        idx.append(k)
    values = v.values[tuple(idx)]
    mesh = np.meshgrid(*[g.axis_coords(a) for a in range(s, g.ndim)], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    keep = np.linalg.norm(pts, axis=1) < 1.0
    pts, vals = pts[keep], values.ravel()[keep]
    x0 = int(np.argmin(np.linalg.norm(pts, axis=1)))
    if vals[x0] < 1:
        # normalized fields have v(0) = 1 up to rounding
        vals = vals / vals[x0]
    space = QuasiMetricSpace(pts, lambda a, b: np.linalg.norm(a - b, axis=-1), 1.0, x0)
    sel = ks_select(space, vals, beta)
    rb = sel.r ** beta
    ball = space.matrix[sel.x] < sel.r
    return {"x": tuple(float(c) for c in pts[sel.x]), "r": sel.r, "omega": sel.omega,
            "lower": 1.0 / (sel.omega * rb), "value": float(vals[sel.x]),
            "sup": float(vals[ball].max()), "upper": sel.omega / rb,
            "ok": bool(ks_witness_check(space, vals, beta, sel))}
