"""Polydiscs, the quasi-metric d_M, the (2,p)-distance and region statistics on grids.

Points are split as ``x = (x', x'')`` with ``x'`` the first ``s`` coordinates.
Balls in each block are open and Euclidean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .field import Grid, ScalarField


class GeometryError(ValueError):
    pass


class ContainmentError(GeometryError):
    """A region required to lie inside the grid box does not."""


def unit_ball_volume(k: int) -> float:
    """Lebesgue measure of the unit ball in R^k."""
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


@dataclass(frozen=True)
class SplitPoint:
    prime: tuple[float, ...]
    doubleprime: tuple[float, ...]

    @classmethod
    def from_coords(cls, x: Sequence[float], s: int) -> "SplitPoint":
        x = tuple(float(v) for v in x)
        if not 1 <= s <= len(x) - 1:
            raise GeometryError(f"split {s} incompatible with {len(x)} coordinates")
        return cls(x[:s], x[s:])

    @property
    def s(self) -> int:
        return len(self.prime)

    @property
    def coords(self) -> np.ndarray:
        return np.array(self.prime + self.doubleprime)


@dataclass(frozen=True)
class Polydisc:
    """``B_theta(c') x B_rho(c'')`` with open Euclidean balls."""

    center: SplitPoint
    theta: float
    rho: float

    def __post_init__(self):
        if not (self.theta > 0 and self.rho > 0):
            raise GeometryError("polydisc radii must be positive")

    @property
    def s(self) -> int:
        return self.center.s

    def scaled(self, factor_theta: float, factor_rho: float) -> "Polydisc":
        return Polydisc(self.center, self.theta * factor_theta, self.rho * factor_rho)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        c = self.center.coords
        s = self.s
        d1 = np.linalg.norm(points[:, :s] - c[:s], axis=1)
        d2 = np.linalg.norm(points[:, s:] - c[s:], axis=1)
        return (d1 < self.theta) & (d2 < self.rho)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.center.coords
        r = np.array([self.theta] * self.s + [self.rho] * (len(c) - self.s))
        return c - r, c + r

    def inside(self, grid: Grid) -> bool:
        """True when the closure of the polydisc lies in the closed grid box."""
        lo, hi = self.bounding_box()
        tol = 1e-12 * max(1.0, float(np.max(np.abs(grid.upper - grid.lower))))
        return bool(np.all(lo >= grid.lower - tol) and np.all(hi <= grid.upper + tol))

    def volume(self) -> float:
        n = len(self.center.coords)
        return (unit_ball_volume(self.s) * self.theta ** self.s
                * unit_ball_volume(n - self.s) * self.rho ** (n - self.s))


@dataclass(frozen=True)
class QuasiMetric:
    M: float
    p: float
    s: int

    def __post_init__(self):
        if self.M <= 0:
            raise GeometryError("quasi-metric scale M must be positive")

    @property
    def gamma_q(self) -> float:
        return 2.0 ** (2.0 / self.p - 1.0)


def d_M(x, y, q: QuasiMetric) -> np.ndarray | float:
    """``max(|x'-y'|^(2/p) M^(-2/p), |x''-y''|)``; broadcasts over leading axes."""
    if isinstance(x, SplitPoint):
        if not isinstance(y, SplitPoint) or x.s != y.s or len(x.doubleprime) != len(y.doubleprime):
            raise GeometryError("points have mismatched split structure")
        x, y = x.coords, y.coords
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise GeometryError("points have mismatched dimension")
    s = q.s
    a = np.linalg.norm(x[..., :s] - y[..., :s], axis=-1)
    b = np.linalg.norm(x[..., s:] - y[..., s:], axis=-1)
    out = np.maximum((a / q.M) ** (2.0 / q.p), b)
    return float(out) if out.ndim == 0 else out


def quasimetric_ball(center: SplitPoint, rho: float, q: QuasiMetric) -> Polydisc:
    """The d_M ball of radius ``rho``, which is the polydisc ``Q_{rho^(p/2) M, rho}``."""
    return Polydisc(center, rho ** (q.p / 2.0) * q.M, rho)


def twop_dist(K: np.ndarray, boundary: np.ndarray, uinf: float, p: float, s: int,
              chunk: int = 4096) -> float:
    """Minimum over pairs of ``|x'-y'|^(2/p) uinf^((p-2)/p) + |x''-y''|``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    boundary = np.atleast_2d(np.asarray(boundary, dtype=float))
    if K.size == 0 or boundary.size == 0:
        raise GeometryError("twop_dist needs two nonempty point sets")
    if uinf <= 0:
        raise GeometryError("uinf must be positive")
    scale = uinf ** ((p - 2.0) / p)
    best = math.inf
    for start in range(0, len(K), chunk):
        blk = K[start:start + chunk, None, :]
        a = np.linalg.norm(blk[..., :s] - boundary[None, :, :s], axis=-1)
        b = np.linalg.norm(blk[..., s:] - boundary[None, :, s:], axis=-1)
        best = min(best, float(np.min(a ** (2.0 / p) * scale + b)))
    return best


class RegionStats(NamedTuple):
    sup: float
    inf: float
    osc: float
    mean: float
    measure: float
    count: int
    clipped_fraction: float


def polydisc_mask(grid: Grid, region: Polydisc) -> np.ndarray:
    """Boolean node mask of the grid nodes lying in ``region``."""
    if region.s != grid.split or len(region.center.coords) != grid.ndim:
        raise GeometryError("region split does not match the grid")
    c = region.center.coords
    coords = grid.coords()
    d1 = sum((coords[a] - c[a]) ** 2 for a in range(grid.split))
    d2 = sum((coords[a] - c[a]) ** 2 for a in range(grid.split, grid.ndim))
    mask = (np.sqrt(d1) < region.theta) & (np.sqrt(d2) < region.rho)
    return np.broadcast_to(mask, grid.dims)


def clipped_fraction(grid: Grid, region: Polydisc) -> float:
    """Fraction of lattice sites of the (unbounded) grid lattice in ``region`` that
    fall outside the grid box."""
    lo, hi = region.bounding_box()
    h = np.asarray(grid.spacing)
    o = np.asarray(grid.origin)
    kmin = np.ceil((lo - o) / h).astype(int)
    kmax = np.floor((hi - o) / h).astype(int)
    axes = [o[a] + h[a] * np.arange(kmin[a], kmax[a] + 1) for a in range(grid.ndim)]
    if any(len(ax) == 0 for ax in axes):
        return 0.0
    mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    c = region.center.coords
    s = grid.split
    d1 = sum((mesh[a] - c[a]) ** 2 for a in range(s))
    d2 = sum((mesh[a] - c[a]) ** 2 for a in range(s, grid.ndim))
    inside_region = (np.sqrt(d1) < region.theta) & (np.sqrt(d2) < region.rho)
    inside_box = np.ones_like(inside_region, dtype=bool)
    tol = 1e-9 * h
    for a in range(grid.ndim):
        inside_box = inside_box & (mesh[a] >= grid.lower[a] - tol[a]) & (mesh[a] <= grid.upper[a] + tol[a])
    total = int(np.count_nonzero(inside_region))
    if total == 0:
        return 0.0
    return 1.0 - int(np.count_nonzero(inside_region & inside_box)) / total


def region_stats(field: ScalarField, region: Polydisc) -> RegionStats:
    mask = polydisc_mask(field.grid, region)
    vals = field.values[mask]
    if vals.size == 0:
        raise GeometryError("region does not contain any grid node")
    sup, inf = float(vals.max()), float(vals.min())
    return RegionStats(sup, inf, sup - inf, float(vals.mean()),
                       vals.size * field.grid.cell_volume, int(vals.size),
                       clipped_fraction(field.grid, region))


def sublevel_measure(field: ScalarField, region: Polydisc, level: float) -> float:
    """Cell-counted measure of ``{u <= level}`` inside ``region``."""
    mask = polydisc_mask(field.grid, region)
    if not mask.any():
        raise GeometryError("region does not contain any grid node")
    return int(np.count_nonzero(field.values[mask] <= level)) * field.grid.cell_volume
