"""Cube functionals, generalized Lipschitz seminorms and symbol estimates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .domain import Box, Cube, CubeLattice, DyadicCube, GridFunction, average, level_blocks, restrict
from .exceptions import ClippingWarning, DomainError
from .exponents import ExponentField, Field
from .spaces import as_phi, cube_norm_ratio, indicator_norm, indicator_norms

__all__ = [
    "CubeFunctional",
    "SymbolReport",
    "lipschitz_seminorm",
    "seminorm_equivalence_check",
    "oscillation_norm_ratio",
    "nested_average_gap",
    "variable_lipschitz_pointwise_check",
    "diening_power_ratio",
    "power_symbol",
]


def _cube_key(Q: Cube) -> tuple:
    return (tuple(round(v, 15) for v in Q.lo), round(Q.side, 15))


class CubeFunctional:
    """``a(Q) > 0`` on cubes.

    Kinds: ``one`` (a = 1), ``power`` (|Q|^(delta/n)), ``variable``
    (``||chi_Q||_{n/delta(.)}``) and ``table`` (explicit values keyed by cube).
    """

    def __init__(self, kind: str, delta=None, n: int = 1, table: Optional[Mapping] = None):
        self.kind = kind
        self.n = n
        self._cache: dict = {}
        if kind == "one":
            pass
        elif kind == "power":
            if delta is None or not 0 <= float(delta):
                raise DomainError("power functional needs delta >= 0")
            self.delta = float(delta)
        elif kind == "variable":
            if not isinstance(delta, Field):
                raise DomainError("variable functional needs a delta field")
            if delta.minus <= 0:
                raise DomainError("variable functional needs delta^- > 0 so that n/delta is finite")
            if delta.plus > delta.n:
                raise DomainError("variable functional needs delta <= n")
            self.delta = delta
            self.n = delta.n
            fd = delta._func
            nn = delta.n
            self.exponent = ExponentField.promote(
                delta._derive(lambda x: nn / fd(x), "n_over_delta", {"n": nn}, at_infinity=None)
            )
        elif kind == "table":
            if table is None:
                raise DomainError("table functional needs a table")
            self.table = {(_cube_key(k) if isinstance(k, Cube) else k): float(v) for k, v in table.items()}
        else:
            raise DomainError(f"unknown cube functional kind {kind!r}")

    @classmethod
    def one(cls, n: int = 1) -> "CubeFunctional":
        return cls("one", n=n)

    @classmethod
    def power(cls, delta: float, n: int = 1) -> "CubeFunctional":
        return cls("power", delta=delta, n=n)

    @classmethod
    def variable(cls, delta: Field) -> "CubeFunctional":
        return cls("variable", delta=delta)

    def __call__(self, Q: Cube) -> float:
        return float(self.values([Q])[0])

    def values(self, cubes: Sequence[Cube]) -> np.ndarray:
        if self.kind == "one":
            return np.ones(len(cubes))
        if self.kind == "power":
            return np.array([Q.measure ** (self.delta / self.n) for Q in cubes])
        if self.kind == "table":
            try:
                return np.array([self.table[_cube_key(Q)] for Q in cubes])
            except KeyError as exc:
                raise DomainError(f"cube {exc.args[0]} missing from the functional table") from exc
        keys = [_cube_key(Q) for Q in cubes]
        missing = [i for i, k in enumerate(keys) if k not in self._cache]
        if missing:
            vals = indicator_norms(self.exponent, [cubes[i] for i in missing])
            for i, v in zip(missing, vals):
                self._cache[keys[i]] = float(v)
        return np.array([self._cache[k] for k in keys])

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "power":
            d["delta"] = self.delta
        if self.kind == "variable":
            d["delta"] = self.delta.describe()
        return d


@dataclass(frozen=True)
class SymbolReport:
    seminorm: float
    t_infinity: float
    worst_cube: Optional[Cube]

    def to_dict(self) -> dict:
        wc = None if self.worst_cube is None else {"lo": list(self.worst_cube.lo), "side": self.worst_cube.side}
        return {"seminorm": self.seminorm, "t_infinity": self.t_infinity, "worst_cube": wc}


def _level_oscillations(b: GridFunction, level: int, rho: float) -> np.ndarray:
    blocks = level_blocks(b.values, max(level, 0), b.n)
    mean = blocks.mean(axis=1, keepdims=True)
    return np.mean(np.abs(blocks - mean) ** rho, axis=1) ** (1.0 / rho)


def _oscillation(b: GridFunction, Q: Cube, rho: float) -> float:
    v, _, w = restrict(b, Q)
    mean = np.dot(v, w) / w.sum()
    return float((np.dot(np.abs(v - mean) ** rho, w) / w.sum()) ** (1.0 / rho))


def _nested_pairs(lattice: CubeLattice, depth: int, max_levels: int, budget: int, seed: int):
    rng = np.random.default_rng(seed)
    pairs = []
    top = lattice.j_min
    for j in range(top, min(lattice.j_max, top + max_levels) + 1):
        for Q in lattice.level_cubes(j):
            frontier = [Q]
            for _ in range(min(depth, lattice.j_max - j)):
                frontier = [c for P in frontier for c in (P.children() if P.level >= 0 else [_box_child(lattice, P)])]
                pairs.extend((Q, c) for c in frontier)
    if len(pairs) > budget:
        keep = rng.choice(len(pairs), size=budget, replace=False)
        pairs = [pairs[i] for i in sorted(keep)]
    return pairs


def _box_child(lattice: CubeLattice, P: DyadicCube) -> DyadicCube:
    return lattice.level_cubes(P.level + 1)[0]


def lipschitz_seminorm(b: GridFunction, a: CubeFunctional, rho: float, lattice: CubeLattice,
                       include_shifted: bool = True, pair_budget: int = 4000, seed: int = 0) -> SymbolReport:
    """``max_Q a(Q)^-1 (avg_Q |b - b_Q|^rho)^(1/rho)`` over the lattice, with the T_inf constant.

    Sub-cell cubes carry zero oscillation and are skipped.
    """
    if rho < 1:
        raise DomainError("rho must be >= 1")
    best, worst = 0.0, None
    depth = b.depth
    for j in lattice.levels:
        if j > depth:
            break
        cubes = lattice.level_cubes(j)
        osc = _level_oscillations(b, j, rho)
        av = a.values(cubes)
        if np.any(av <= 0):
            raise DomainError("cube functional vanishes on a tested cube")
        r = osc / av
        k = int(np.argmax(r))
        if r[k] > best or worst is None:
            best, worst = float(r[k]), cubes[k]
        if include_shifted:
            sh = lattice.shifted_cubes(j)
            if sh:
                avs = a.values(sh)
                if np.any(avs <= 0):
                    raise DomainError("cube functional vanishes on a tested cube")
                for Q, aq in zip(sh, avs):
                    v = _oscillation(b, Q, rho) / aq
                    if v > best:
                        best, worst = v, Q
    t_inf = t_infinity(a, lattice, pair_budget=pair_budget, seed=seed)
    return SymbolReport(best, t_inf, worst)


def t_infinity(a: CubeFunctional, lattice: CubeLattice, depth: int = 2, max_levels: int = 8,
               pair_budget: int = 4000, seed: int = 0) -> float:
    """``max a(Q')/a(Q)`` over sampled nested lattice pairs ``Q' ⊂ Q`` (always >= 1)."""
    if a.kind == "one":
        return 1.0
    pairs = _nested_pairs(lattice, depth, max_levels, pair_budget, seed)
    if not pairs:
        return 1.0
    big = a.values([p[0] for p in pairs])
    small = a.values([p[1] for p in pairs])
    return float(max(1.0, np.max(small / big)))


def seminorm_equivalence_check(b: GridFunction, a: CubeFunctional, rho: float, lattice: CubeLattice):
    """``(rho-seminorm, 1-seminorm)``."""
    s_rho = lipschitz_seminorm(b, a, rho, lattice).seminorm
    s_one = lipschitz_seminorm(b, a, 1.0, lattice).seminorm
    return s_rho, s_one


def oscillation_norm_ratio(b: GridFunction, p, k: int, Q: Cube, tol: float = 1e-10) -> float:
    """``||chi_Q (b - b_Q)^k||_p / ||chi_Q||_p``."""
    if k < 1:
        raise DomainError("k must be a positive integer")
    phi = as_phi(p)
    if hasattr(phi, "alpha") and phi.alpha.minus <= 1:
        raise DomainError("oscillation ratio needs 1 < p^-")
    bq = average(b, Q)
    return cube_norm_ratio(phi, (b - bq) ** k, Q, tol)


def nested_average_gap(b: GridFunction, a: Optional[CubeFunctional], Q: Cube) -> float:
    """``|b_3Q - b_Q|`` with averages over the parts inside the box (warns when 3Q is clipped)."""
    Q3 = Q.dilate(3.0)
    if Q3.intersection_measure(b.box) <= 0:
        raise DomainError("3Q does not meet the box")
    if Q3.is_clipped(b.box):
        warnings.warn("3Q was clipped to the box", ClippingWarning, stacklevel=2)
    return abs(average(b, Q3) - average(b, Q))


def _block_extremes_dilated(b: GridFunction, level: int, k: int):
    """Per level cube: (min, max) of ``b`` over midpoints lying in ``kQ`` (odd ``k``)."""
    n, N = b.n, b.cells_per_side
    M = 1 << level
    blocks = level_blocks(b.values, level, n)
    bmax = blocks.max(axis=1).reshape((M,) * n)
    bmin = blocks.min(axis=1).reshape((M,) * n)
    rad = (k - 1) // 2
    hi = bmax.copy()
    lo = bmin.copy()
    for axis in range(n):
        ph, pl = hi.copy(), lo.copy()
        for s in range(1, rad + 1):
            for sgn in (1, -1):
                sh = np.roll(ph, sgn * s, axis=axis)
                sl = np.roll(pl, sgn * s, axis=axis)
                idx = np.arange(M)
                valid = (idx - sgn * s >= 0) & (idx - sgn * s < M)
                shape = [1] * n
                shape[axis] = M
                valid = valid.reshape(shape)
                hi = np.where(valid, np.maximum(hi, sh), hi)
                lo = np.where(valid, np.minimum(lo, sl), lo)
    return lo.reshape(-1), hi.reshape(-1)


def variable_lipschitz_pointwise_check(b: GridFunction, delta: Field, pairs, lattice: CubeLattice, k: int = 3,
                                       seed: int = 0):
    """``(C1, C2)``: pointwise Hölder constant and the ``kQ`` oscillation constant.

    ``C1 = max |b(x) - b(z)| / |x - z|^delta(x)`` over sampled midpoint pairs;
    ``C2 = max |b(z) - b_Q| / ||chi_Q||_{n/delta}`` over lattice cubes and
    midpoints ``z`` in ``kQ``.  ``pairs`` is a pair count or an array of
    index pairs into the flattened grid.
    """
    if k < 1 or k % 2 == 0:
        raise DomainError("k must be an odd positive integer")
    pts = b.midpoints().reshape(-1, b.n)
    vals = b.values.reshape(-1)
    total = len(vals)
    if np.isscalar(pairs):
        rng = np.random.default_rng(seed)
        cnt = int(pairs)
        i = rng.integers(0, total, size=cnt)
        j = rng.integers(0, total, size=cnt)
        # neighbour pairs probe the smallest scale
        ii = np.arange(total - 1)
        i = np.concatenate([i, ii])
        j = np.concatenate([j, ii + 1])
    else:
        arr = np.asarray(pairs, dtype=int)
        i, j = arr[:, 0], arr[:, 1]
    d = np.linalg.norm(pts[i] - pts[j], axis=-1)
    keep = d > 0
    i, j, d = i[keep], j[keep], d[keep]
    dx = delta(pts[i])
    c1 = float(np.max(np.abs(vals[i] - vals[j]) / d**dx, initial=0.0))
    a = CubeFunctional.variable(delta)
    c2 = 0.0
    for lev in lattice.levels:
        if lev < 0 or lev > b.depth:
            continue
        cubes = lattice.level_cubes(lev)
        lo, hi = _block_extremes_dilated(b, lev, k)
        means = level_blocks(b.values, lev, b.n).mean(axis=1)
        gap = np.maximum(hi - means, means - lo)
        if not np.any(gap > 0):
            continue
        norms = a.values(cubes)
        c2 = max(c2, float(np.max(gap / norms)))
    return c1, c2


def diening_power_ratio(f: GridFunction, p, Q: Cube, nu: float = 0.5) -> float:
    """``||chi_Q |f|^nu||_p / (||chi_Q||_p |f_Q|^nu)`` for a fixed ``nu`` in (0, 1)."""
    if not 0 < nu < 1:
        raise DomainError("nu must lie in (0, 1)")
    fq = average(abs(f), Q)
    if fq == 0:
        raise DomainError("the average of |f| over Q vanishes")
    return cube_norm_ratio(p, abs(f) ** nu, Q) / fq**nu


def power_symbol(box: Box, cells_per_side: int, centers, exponents, coefficients) -> GridFunction:
    """``b(x) = sum_i c_i |x - x_i|^delta_i`` sampled at midpoints."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if box.n == 1 and centers.shape[-1] != 1:
        centers = centers.reshape(-1, 1)
    exps = np.atleast_1d(np.asarray(exponents, dtype=float))
    coefs = np.atleast_1d(np.asarray(coefficients, dtype=float))
    if not (len(centers) == len(exps) == len(coefs)):
        raise DomainError("centers, exponents and coefficients must have equal lengths")
    if np.any(exps <= 0) or np.any(exps > 1):
        raise DomainError("symbol exponents must lie in (0, 1]")

    def f(x):
        out = np.zeros(x.shape[:-1])
        for c, e, k in zip(centers, exps, coefs):
            out = out + k * np.linalg.norm(x - c, axis=-1) ** e
        return out

    return GridFunction.sample(box, cells_per_side, f)
