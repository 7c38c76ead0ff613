"""Boxes, uniform midpoint grids, grid functions and truncated dyadic lattices.

Every integral in the package is a midpoint sum over the cells of a uniform
grid laid on a bounded box.  Functions are piecewise constant on cells, so
integrals over cell-aligned regions are exact; for unaligned regions the
exact overlap measure of each cell is used instead.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from .exceptions import DomainError

__all__ = [
    "Box",
    "Cube",
    "DyadicCube",
    "GridFunction",
    "CubeLattice",
    "integrate",
    "average",
    "enumerate_cubes",
    "restrict",
    "level_blocks",
    "expand_blocks",
    "random_indicator_sum",
]

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-parallel cube ``center ± half_width`` in dimension 1 or 2."""

    center: tuple
    half_width: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.center, dtype=float)))
        if len(c) not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {len(c)}")
        hw = float(self.half_width)
        if not (hw > 0 and math.isfinite(hw)):
            raise DomainError(f"half_width must be positive and finite, got {self.half_width}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_width", hw)

    @classmethod
    def from_bounds(cls, lo, hi, n: int = 1) -> "Box":
        """Box ``[lo, hi]^n``."""
        lo, hi = float(lo), float(hi)
        if not hi > lo:
            raise DomainError(f"empty box [{lo}, {hi}]")
        return cls(center=(0.5 * (lo + hi),) * n, half_width=0.5 * (hi - lo))

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.half_width

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + self.half_width

    @property
    def side(self) -> float:
        return 2.0 * self.half_width

    @property
    def volume(self) -> float:
        return self.side ** self.n

    def as_cube(self) -> "DyadicCube":
        return DyadicCube(lo=tuple(self.lo), side=self.side, level=0, index=(0,) * self.n)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_width": self.half_width}


@dataclass(frozen=True)
class Cube:
    """Half-open axis-parallel cube ``[lo, lo + side)``."""

    lo: tuple
    side: float

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in np.atleast_1d(self.lo)))
        object.__setattr__(self, "side", float(self.side))
        if not self.side > 0:
            raise DomainError(f"cube side must be positive, got {self.side}")

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def hi(self) -> tuple:
        return tuple(v + self.side for v in self.lo)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.lo) + 0.5 * self.side

    @property
    def measure(self) -> float:
        return self.side ** self.n

    def dilate(self, gamma: float) -> "Cube":
        """Concentric cube with side ``gamma * side``."""
        if not gamma > 0:
            raise DomainError("dilation factor must be positive")
        c = self.center
        return Cube(lo=tuple(c - 0.5 * gamma * self.side), side=gamma * self.side)

    def clip(self, box: Box) -> Optional[tuple[np.ndarray, np.ndarray]]:
        lo = np.maximum(np.asarray(self.lo), box.lo)
        hi = np.minimum(np.asarray(self.hi), box.hi)
        if np.any(hi <= lo):
            return None
        return lo, hi

    def is_clipped(self, box: Box) -> bool:
        """True when part of the cube lies outside ``box``."""
        tol = 1e-12 * box.side
        return bool(np.any(np.asarray(self.lo) < box.lo - tol) or np.any(np.asarray(self.hi) > box.hi + tol))

    def intersection_measure(self, box: Box) -> float:
        c = self.clip(box)
        if c is None:
            return 0.0
        return float(np.prod(c[1] - c[0]))

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and self.n == 1:
            pts = pts[..., None]
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts < hi), axis=-1)

    def contains_cube(self, other: "Cube") -> bool:
        tol = 1e-12 * max(self.side, 1.0)
        return bool(
            np.all(np.asarray(other.lo) >= np.asarray(self.lo) - tol)
            and np.all(np.asarray(other.hi) <= np.asarray(self.hi) + tol)
        )


@dataclass(frozen=True)
class DyadicCube(Cube):
    """Lattice cube at ``level`` with integer ``index`` relative to its lattice box."""

    level: int = 0
    index: tuple = ()
    shifted: bool = False

    def parent(self) -> "DyadicCube":
        if self.shifted:
            raise DomainError("shifted cubes have no dyadic parent")
        idx = tuple(i // 2 for i in self.index)
        lo = tuple(l - (i % 2) * self.side for l, i in zip(self.lo, self.index))
        return DyadicCube(lo=lo, side=2 * self.side, level=self.level - 1, index=idx)

    def children(self) -> list["DyadicCube"]:
        h = 0.5 * self.side
        out = []
        for bits in itertools.product((0, 1), repeat=self.n):
            lo = tuple(l + b * h for l, b in zip(self.lo, bits))
            idx = tuple(2 * i + b for i, b in zip(self.index, bits))
            out.append(DyadicCube(lo=lo, side=h, level=self.level + 1, index=idx))
        return out

    @property
    def key(self) -> tuple:
        return (self.level, self.index, self.shifted)

    def label(self) -> str:
        tag = "s" if self.shifted else "d"
        return f"{tag}{self.level}:" + ",".join(str(i) for i in self.index)


# --------------------------------------------------------------------------
# grid functions
# --------------------------------------------------------------------------


def _grid_midpoints(box: Box, N: int) -> np.ndarray:
    h = box.side / N
    axes = [box.lo[d] + (np.arange(N) + 0.5) * h for d in range(box.n)]
    if box.n == 1:
        return axes[0][:, None]
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    return np.stack([X, Y], axis=-1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real function sampled at the midpoints of ``cells_per_side**n`` cells."""

    box: Box
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        n = self.box.n
        if v.ndim != n or len(set(v.shape)) != 1:
            raise DomainError(f"values must have shape (N,)*{n}, got {v.shape}")
        N = v.shape[0]
        if N < 1 or N & (N - 1):
            raise DomainError(f"cells_per_side must be a power of two, got {N}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, box: Box, cells_per_side: int, func: Callable) -> "GridFunction":
        """Evaluate ``func(points)`` with ``points`` of shape ``(..., n)`` at midpoints."""
        pts = _grid_midpoints(box, cells_per_side)
        vals = np.asarray(func(pts), dtype=float)
        return cls(box, np.broadcast_to(vals, pts.shape[:-1]))

    @classmethod
    def constant(cls, box: Box, cells_per_side: int, c: float = 1.0) -> "GridFunction":
        return cls(box, np.full((cells_per_side,) * box.n, float(c)))

    @classmethod
    def indicator(cls, box: Box, cells_per_side: int, cube: Cube) -> "GridFunction":
        """Cell averages of the indicator of ``cube`` (0/1 for aligned cubes)."""
        w = _overlap_weights(box, cells_per_side, cube)
        h = box.side / cells_per_side
        frac = w / h ** box.n
        return cls(box, np.clip(frac, 0.0, 1.0))

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def cells_per_side(self) -> int:
        return self.values.shape[0]

    @property
    def depth(self) -> int:
        return self.cells_per_side.bit_length() - 1

    @property
    def cell_width(self) -> float:
        return self.box.side / self.cells_per_side

    @property
    def cell_measure(self) -> float:
        return self.cell_width ** self.n

    def midpoints(self) -> np.ndarray:
        return _grid_midpoints(self.box, self.cells_per_side)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.box, values)

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.box != self.box or other.values.shape != self.values.shape:
                raise DomainError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._coerce(other))

    def __rsub__(self, other):
        return self.with_values(self._coerce(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._coerce(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def __abs__(self):
        return self.with_values(np.abs(self.values))

    def __pow__(self, k):
        return self.with_values(self.values ** k)

    # -- serialization ------------------------------------------------------

    def _header(self) -> str:
        c = " ".join(repr(v) for v in self.box.center)
        return f"n={self.n} cells_per_side={self.cells_per_side} center={c} half_width={self.box.half_width!r}"

    def to_csv(self, path=None) -> Optional[str]:
        """Row-major CSV; first line is a ``#`` header describing the grid."""
        buf = io.StringIO()
        buf.write("# " + self._header() + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        rows = self.values.reshape(self.cells_per_side, -1)
        for row in rows:
            writer.writerow([format(v, ".17g") for v in row])
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text)
        return None

    @classmethod
    def from_csv(cls, source) -> "GridFunction":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise DomainError("missing grid header line")
        meta = _parse_header(lines[0][1:])
        rows = [list(map(float, r)) for r in csv.reader(lines[1:]) if r]
        vals = np.asarray(rows, dtype=float)
        N = meta["cells_per_side"]
        box = Box(meta["center"], meta["half_width"])
        return cls(box, vals.reshape((N,) * box.n))

    def to_binary(self, path) -> None:
        """Little-endian float64 row-major payload prefixed by a text header line."""
        with open(path, "wb") as fh:
            fh.write((self._header() + "\n").encode())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "GridFunction":
        raw = Path(path).read_bytes()
        head, _, payload = raw.partition(b"\n")
        meta = _parse_header(head.decode())
        N = meta["cells_per_side"]
        box = Box(meta["center"], meta["half_width"])
        vals = np.frombuffer(payload, dtype="<f8").reshape((N,) * box.n)
        return cls(box, vals)


def _parse_header(line: str) -> dict:
    parts = line.strip().split()
    meta: dict = {}
    key = None
    for tok in parts:
        if "=" in tok:
            key, val = tok.split("=", 1)
            meta[key] = [val]
        elif key is not None:
            meta[key].append(tok)
    try:
        n = int(meta["n"][0])
        out = {
            "n": n,
            "cells_per_side": int(meta["cells_per_side"][0]),
            "center": tuple(float(v) for v in meta["center"]),
            "half_width": float(meta["half_width"][0]),
        }
    except (KeyError, ValueError) as exc:
        raise DomainError(f"malformed grid header: {line!r}") from exc
    if len(out["center"]) != n:
        raise DomainError("header center does not match n")
    return out


# --------------------------------------------------------------------------
# restriction and quadrature
# --------------------------------------------------------------------------


def _overlap_weights(box: Box, N: int, region) -> np.ndarray:
    """Exact measure of ``region ∩ cell`` for every cell, shape ``(N,)*n``."""
    lo = np.asarray(region.lo if hasattr(region, "lo") else region[0], dtype=float)
    hi = np.asarray(region.hi if hasattr(region, "hi") else region[1], dtype=float)
    h = box.side / N
    per_dim = []
    for d in range(box.n):
        edges = box.lo[d] + np.arange(N + 1) * h
        ov = np.minimum(hi[d], edges[1:]) - np.maximum(lo[d], edges[:-1])
        per_dim.append(np.clip(ov, 0.0, None))
    if box.n == 1:
        return per_dim[0]
    return per_dim[0][:, None] * per_dim[1][None, :]


def _aligned_slices(box: Box, N: int, cube: Cube) -> Optional[tuple]:
    """Cell slices covering ``cube ∩ box`` when the cube sits on cell edges."""
    h = box.side / N
    a = (np.asarray(cube.lo) - box.lo) / h
    s = cube.side / h
    ra, rs = np.rint(a), round(s)
    if rs < 1 or abs(s - rs) > _ALIGN_TOL * max(1.0, s) or np.any(np.abs(a - ra) > _ALIGN_TOL * np.maximum(1.0, np.abs(a))):
        return None
    start = np.clip(ra.astype(int), 0, N)
    stop = np.clip(ra.astype(int) + int(rs), 0, N)
    if np.any(stop <= start):
        return ()
    return tuple(slice(int(b), int(e)) for b, e in zip(start, stop))


def restrict(f: GridFunction, region: Cube):
    """Cells meeting ``region``: (values, midpoints, overlap measures), flattened.

    Aligned cubes use whole cells; otherwise partial cells carry their exact
    overlap measure.
    """
    sl = _aligned_slices(f.box, f.cells_per_side, region)
    pts = f.midpoints()
    if sl is not None:
        if sl == ():
            return np.empty(0), np.empty((0, f.n)), np.empty(0)
        v = f.values[sl].ravel()
        p = pts[sl].reshape(-1, f.n)
        return v, p, np.full(v.shape, f.cell_measure)
    w = _overlap_weights(f.box, f.cells_per_side, region)
    mask = w > 0
    return f.values[mask], pts[mask], w[mask]


def integrate(f: GridFunction, region: Optional[Cube] = None) -> float:
    """Midpoint integral of ``f`` over the box or over ``region ∩ box``."""
    if region is None:
        return float(f.values.sum() * f.cell_measure)
    v, _, w = restrict(f, region)
    return float(np.dot(v, w))


def average(f: GridFunction, Q: Cube) -> float:
    """Mean of ``f`` over ``Q ∩ box``."""
    m = Q.intersection_measure(f.box)
    if m <= 0:
        raise DomainError("cube does not meet the box")
    return integrate(f, Q) / m


# --------------------------------------------------------------------------
# level blocks: all cubes of one lattice level at once
# --------------------------------------------------------------------------


def level_blocks(arr: np.ndarray, level: int, n: int) -> np.ndarray:
    """Reshape per-cell data ``(N,)*n + tail`` into ``(2**(level*n), cells_per_cube) + tail``.

    Row order matches the lexicographic cube order of :meth:`CubeLattice.level_cubes`.
    """
    N = arr.shape[0]
    M = 1 << level
    if M > N:
        raise DomainError(f"level {level} is finer than the grid ({N} cells per side)")
    s = N // M
    tail = arr.shape[n:]
    if n == 1:
        return arr.reshape((M, s) + tail)
    b = arr.reshape((M, s, M, s) + tail)
    b = np.swapaxes(b, 1, 2)
    return b.reshape((M * M, s * s) + tail)


def expand_blocks(per_cube: np.ndarray, level: int, N: int, n: int) -> np.ndarray:
    """Broadcast one value per level cube back to the ``(N,)*n`` cells."""
    M = 1 << level
    s = N // M
    if n == 1:
        return np.repeat(per_cube, s)
    grid = per_cube.reshape(M, M)
    return np.repeat(np.repeat(grid, s, axis=0), s, axis=1)


# --------------------------------------------------------------------------
# lattices
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CubeLattice:
    """Dyadic cubes of a box at levels ``j_min..j_max`` (side ``box.side / 2**j``).

    Negative levels contribute the single cube of that size anchored at the
    box's lower corner.  ``shifted_per_level`` extra cubes per level are drawn
    with seeded uniform shifts snapped to the finest lattice spacing.
    """

    box: Box
    j_min: int
    j_max: int
    shifted_per_level: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.j_min > self.j_max:
            raise DomainError(f"j_min={self.j_min} exceeds j_max={self.j_max}")

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def levels(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def side(self, level: int) -> float:
        return self.box.side * 2.0 ** (-level)

    def level_cubes(self, level: int) -> list[DyadicCube]:
        side = self.side(level)
        lo0 = self.box.lo
        if level <= 0:
            return [DyadicCube(lo=tuple(lo0), side=side, level=level, index=(0,) * self.n)]
        M = 1 << level
        out = []
        for idx in itertools.product(range(M), repeat=self.n):
            lo = tuple(lo0[d] + idx[d] * side for d in range(self.n))
            out.append(DyadicCube(lo=lo, side=side, level=level, index=idx))
        return out

    def shifted_cubes(self, level: int) -> list[DyadicCube]:
        if self.shifted_per_level <= 0 or level <= 0:
            return []
        fine = self.side(max(self.j_max, level))
        side = self.side(level)
        slots = int(round((self.box.side - side) / fine))
        rng = np.random.default_rng([self.seed, level])
        out = []
        for _ in range(self.shifted_per_level):
            k = rng.integers(0, slots + 1, size=self.n)
            lo = tuple(self.box.lo[d] + k[d] * fine for d in range(self.n))
            out.append(DyadicCube(lo=lo, side=side, level=level, index=tuple(int(v) for v in k), shifted=True))
        return out

    def enumerate_cubes(self, filter: Optional[Callable] = None, include_shifted: bool = False) -> Iterator[DyadicCube]:
        for j in self.levels:
            cubes = self.level_cubes(j)
            if include_shifted:
                cubes = cubes + self.shifted_cubes(j)
            for Q in cubes:
                if filter is None or filter(Q):
                    yield Q

    def count(self) -> int:
        return sum(1 for _ in self.enumerate_cubes())


def enumerate_cubes(lat: CubeLattice, filter: Optional[Callable] = None, include_shifted: bool = False) -> list[DyadicCube]:
    """Lattice cubes in level-major, then lexicographic-index order."""
    return list(lat.enumerate_cubes(filter=filter, include_shifted=include_shifted))


# --------------------------------------------------------------------------
# random nonnegative test functions
# --------------------------------------------------------------------------


def random_indicator_sum(
    box: Box,
    cells_per_side: int,
    rng: np.random.Generator,
    max_terms: int = 5,
    bumps: bool = True,
    min_level: int = 1,
    max_level: Optional[int] = None,
    support: Optional[Cube] = None,
) -> GridFunction:
    """Sum of 1..max_terms scaled indicators of random dyadic cubes, plus an optional smooth bump.

    With ``support`` given, cubes and bumps are drawn inside it.
    """
    depth = cells_per_side.bit_length() - 1
    if max_level is None:
        max_level = depth
    max_level = min(max_level, depth)
    region = support if support is not None else box.as_cube()
    vals = np.zeros((cells_per_side,) * box.n)
    pts = _grid_midpoints(box, cells_per_side)
    k = int(rng.integers(1, max_terms + 1))
    for _ in range(k):
        j = int(rng.integers(min_level, max_level + 1))
        side = box.side * 2.0 ** (-j)
        slots = max(int(round(region.side / side)), 1)
        idx = rng.integers(0, slots, size=box.n)
        lo = np.asarray(region.lo) + idx * side
        Q = Cube(lo=tuple(lo), side=side)
        vals = vals + rng.uniform(0.2, 2.0) * GridFunction.indicator(box, cells_per_side, Q).values
    if bumps and rng.random() < 0.5:
        c = np.asarray(region.lo) + rng.uniform(0.2, 0.8, size=box.n) * region.side
        r = region.side * rng.uniform(0.05, 0.3)
        d2 = np.sum((pts - c) ** 2, axis=-1) / r**2
        bump = np.where(d2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - d2, 1e-300)), 0.0)
        vals = vals + rng.uniform(0.5, 2.0) * bump
    if support is not None:
        vals = vals * GridFunction.indicator(box, cells_per_side, support).values
    if not np.any(vals > 0):
        vals.flat[0] = 1.0
    return GridFunction(box, vals)
