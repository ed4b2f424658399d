"""Scalar fields on rectangular grids, face differences, and the ANIS file format."""
from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MAGIC = b"ANIS"
VERSION = 1


class FieldFormatError(ValueError):
    """Raised when an ANIS file cannot be decoded."""


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid with uniform spacing per axis.

    Axes ``0 .. split-1`` are the nondegenerate block, the rest the singular block.
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]
    split: int

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        n = len(self.dims)
        if len(self.spacing) != n or len(self.origin) != n:
            raise ValueError("dims, spacing and origin must have the same length")
        if n < 2:
            raise ValueError("grids need at least two axes")
        if any(d < 3 for d in self.dims):
            raise ValueError(f"every axis needs at least 3 nodes, got {self.dims}")
        if any(not h > 0 for h in self.spacing):
            raise ValueError("spacings must be positive")
        if not 1 <= self.split <= n - 1:
            raise ValueError(f"split must lie in [1, N-1], got {self.split}")

    @classmethod
    def box(cls, dims: Sequence[int], lower: Sequence[float], upper: Sequence[float],
            split: int) -> "Grid":
        spacing = tuple((hi - lo) / (n - 1) for n, lo, hi in zip(dims, lower, upper))
        return cls(tuple(dims), spacing, tuple(lower), split)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def coords(self) -> list[np.ndarray]:
        """Broadcastable open mesh of node coordinates, one array per axis."""
        return list(np.meshgrid(*[self.axis_coords(a) for a in range(self.ndim)],
                                indexing="ij", sparse=True))

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(n_nodes, N)`` array in row-major order."""
        mesh = np.meshgrid(*[self.axis_coords(a) for a in range(self.ndim)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.dims, dtype=bool)
        for a in range(self.ndim):
            sl = [slice(None)] * self.ndim
            sl[a] = 0
            mask[tuple(sl)] = True
            sl[a] = -1
            mask[tuple(sl)] = True
        return mask

    def interior_slice(self) -> tuple[slice, ...]:
        return tuple(slice(1, -1) for _ in range(self.ndim))

    def evaluate(self, func: Callable[..., np.ndarray]) -> "ScalarField":
        values = np.broadcast_to(func(*self.coords()), self.dims).astype(float)
        return ScalarField(self, values.copy())


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    p: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != int(np.prod(self.grid.dims)):
            raise ValueError(f"expected {np.prod(self.grid.dims)} values, got {values.size}")
        values = values.reshape(self.grid.dims)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.values = values

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.p)

    def __mul__(self, c: float) -> "ScalarField":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at ``(n, N)`` points inside the grid box."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.grid
        lo, hi = g.lower, g.upper
        tol = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
        if np.any(points < lo - tol) or np.any(points > hi + tol):
            raise ValueError("interpolation point outside the grid box")
        rel = (points - lo) / np.asarray(g.spacing)
        base = np.clip(np.floor(rel).astype(int), 0, np.asarray(g.dims) - 2)
        frac = np.clip(rel - base, 0.0, 1.0)
        out = np.zeros(len(points))
        for corner in range(2 ** g.ndim):
            bits = [(corner >> a) & 1 for a in range(g.ndim)]
            weight = np.ones(len(points))
            idx = []
            for a, b in enumerate(bits):
                weight = weight * (frac[:, a] if b else 1.0 - frac[:, a])
                idx.append(base[:, a] + b)
            out += weight * self.values[tuple(idx)]
        return out

    def value_at(self, point: Sequence[float]) -> float:
        return float(self.interpolate(np.asarray(point, dtype=float)[None, :])[0])


@dataclass
class BoundaryData:
    """Dirichlet values on every boundary node (stored as a full array plus mask)."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray = dc_field(init=False)

    def __post_init__(self):
        self.mask = self.grid.boundary_mask()
        values = np.asarray(self.values, dtype=float).reshape(self.grid.dims)
        if not np.all(np.isfinite(values[self.mask])):
            raise ValueError("boundary values must be finite")
        self.values = np.where(self.mask, values, 0.0)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "BoundaryData":
        return cls(grid, grid.evaluate(func).values)

    @classmethod
    def from_pairs(cls, grid: Grid, pairs: Sequence[tuple[int, float]]) -> "BoundaryData":
        """Build from (flat boundary-node index, value) pairs; each node exactly once."""
        mask = grid.boundary_mask().ravel()
        values = np.zeros(mask.size)
        seen = np.zeros(mask.size, dtype=bool)
        for idx, val in pairs:
            idx = int(idx)
            if idx < 0 or idx >= mask.size or not mask[idx]:
                raise ValueError(f"node {idx} is not a boundary node")
            if seen[idx]:
                raise ValueError(f"boundary node {idx} assigned twice")
            seen[idx] = True
            values[idx] = float(val)
        if not np.array_equal(seen, mask):
            missing = int(np.count_nonzero(mask & ~seen))
            raise ValueError(f"{missing} boundary nodes left unassigned")
        return cls(grid, values.reshape(grid.dims))

    @classmethod
    def from_csv(cls, grid: Grid, path: str | Path) -> "BoundaryData":
        pairs = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    pairs.append((int(row[0]), float(row[1])))
                except ValueError:
                    continue  # header row
        return cls.from_pairs(grid, pairs)

    def boundary_values(self) -> np.ndarray:
        return self.values[self.mask]


def partial(field: ScalarField, axis: int) -> np.ndarray:
    """Forward differences on the faces normal to ``axis`` (0-based).

    The result has ``dims[axis] - 1`` entries along ``axis``.
    """
    g = field.grid
    if not 0 <= axis < g.ndim:
        raise IndexError(f"axis {axis} out of range for a {g.ndim}-d grid")
    return np.diff(field.values, axis=axis) / g.spacing[axis]


def truncate(field: ScalarField, k: float, sign: int = +1) -> ScalarField:
    """``(u - k)_+`` for ``sign=+1`` and ``(u - k)_-`` for ``sign=-1`` (both nonnegative)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return field.with_values(np.maximum(sign * (field.values - k), 0.0))


# ---------------------------------------------------------------- persistence

def _header_bytes(field: ScalarField) -> bytes:
    g = field.grid
    n = g.ndim
    p = float("nan") if field.p is None else float(field.p)
    return (MAGIC
            + struct.pack("<III", VERSION, n, g.split)
            + struct.pack("<d", p)
            + struct.pack(f"<{n}Q", *g.dims)
            + struct.pack(f"<{n}d", *g.spacing)
            + struct.pack(f"<{n}d", *g.origin))


def save(field: ScalarField, path: str | Path) -> None:
    header = _header_bytes(field)
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<I", zlib.crc32(header)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load(path: str | Path) -> ScalarField:
    data = Path(path).read_bytes()
    fixed = 4 + 12 + 8
    if len(data) < fixed or data[:4] != MAGIC:
        raise FieldFormatError("malformed header: bad magic bytes")
    version, n, split = struct.unpack_from("<III", data, 4)
    if version != VERSION or not 2 <= n <= 64:
        raise FieldFormatError(f"malformed header: version={version}, N={n}")
    (p,) = struct.unpack_from("<d", data, 16)
    hlen = fixed + n * (8 + 8 + 8)
    if len(data) < hlen + 4:
        raise FieldFormatError("malformed header: truncated header")
    dims = struct.unpack_from(f"<{n}Q", data, fixed)
    spacing = struct.unpack_from(f"<{n}d", data, fixed + 8 * n)
    origin = struct.unpack_from(f"<{n}d", data, fixed + 16 * n)
    (hcrc,) = struct.unpack_from("<I", data, hlen)
    if zlib.crc32(data[:hlen]) != hcrc:
        raise FieldFormatError("checksum mismatch in header")
    count = int(np.prod(dims))
    start = hlen + 4
    need = 8 * count
    if len(data) < start + need + 4:
        raise FieldFormatError("truncated payload")
    payload = data[start:start + need]
    (pcrc,) = struct.unpack_from("<I", data, start + need)
    if zlib.crc32(payload) != pcrc:
        raise FieldFormatError("checksum mismatch in payload")
    try:
        grid = Grid(dims, spacing, origin, split)
    except ValueError as exc:
        raise FieldFormatError(f"malformed header: {exc}") from exc
    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape(dims)
    return ScalarField(grid, values, None if np.isnan(p) else p)


def export_csv(field: ScalarField, path: str | Path) -> None:
    """One row per node: ``x1..xN,u`` in row-major node order."""
    pts = field.grid.points()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{a + 1}" for a in range(field.grid.ndim)] + ["u"])
        for pt, val in zip(pts, field.values.ravel()):
            w.writerow([repr(float(x)) for x in pt] + [repr(float(val))])
