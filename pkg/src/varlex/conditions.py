"""Two-weight testing functionals and condition F for Phi-function triples."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import Box, CubeLattice, DyadicCube, GridFunction
from .exceptions import DomainError
from .exponents import ExponentField, Field, combine, conjugate
from .gphi import ConjugatePhi, GPhiFunction, PhiFunction, PhiTriple
from .operators import Kernel
from .spaces import as_phi, batch_norms, indicator_norms, level_norm_ratios, luxemburg_norm
from .symbols import CubeFunctional

__all__ = [
    "power_weight",
    "WeightPair",
    "FPReport",
    "fefferman_phong_thm11",
    "fefferman_phong_thm12",
    "ConditionFReport",
    "check_condition_F",
]


def power_weight(box: Box, cells_per_side: int, gamma: float, center=None) -> GridFunction:
    """``|x - center|^gamma`` at the midpoints (``center`` defaults to the box centre)."""
    c = np.asarray(box.center if center is None else center, dtype=float)
    N = cells_per_side

    def func(x):
        r = np.linalg.norm(x - c, axis=-1)
        with np.errstate(divide="ignore"):
            return np.power(r, gamma)

    g = GridFunction.sample(box, N, func)
    if not np.all(np.isfinite(g.values)) or np.any(g.values <= 0):
        raise DomainError("power weight vanishes or blows up at a midpoint; move the centre off the grid points")
    return g


@dataclass(frozen=True)
class WeightPair:
    """Weights ``(v, w)``: ``v`` on the source side (enters as ``v^-1``), ``w`` on the target side."""

    v: GridFunction
    w: GridFunction

    def __post_init__(self):
        if self.v.box != self.w.box or self.v.values.shape != self.w.values.shape:
            raise DomainError("v and w live on different grids")
        for name, g in (("v", self.v), ("w", self.w)):
            if not np.all(np.isfinite(g.values)) or np.any(g.values <= 0):
                raise DomainError(f"weight {name} must be finite and positive at every midpoint")

    @classmethod
    def unit(cls, box: Box, cells_per_side: int) -> "WeightPair":
        one = GridFunction.constant(box, cells_per_side, 1.0)
        return cls(one, one)

    def scaled(self, cv: float = 1.0, cw: float = 1.0) -> "WeightPair":
        return WeightPair(self.v * cv, self.w * cw)

    def local_norms(self, p, l) -> tuple[float, float]:
        """``(||v||_p, ||w||_l)`` on the box: the local-integrability preconditions."""
        nv = luxemburg_norm(p, self.v).value
        nw = luxemburg_norm(l, self.w).value
        if not (math.isfinite(nv) and math.isfinite(nw)):
            raise DomainError("weights fail local integrability: v must lie in L^p and w in L^(Sq) on the box")
        return nv, nw


_FP_COLUMNS = ("cube", "level", "side", "a_factor", "kernel", "indicator_ratio", "v_ratio", "w_ratio", "functional")


@dataclass
class FPReport:
    """Per-cube testing functional and its lattice max ``kappa``."""

    kappa: float
    worst_cube: Optional[DyadicCube]
    table: dict
    condition: str
    params: dict = field(default_factory=dict)

    def level_profile(self) -> dict:
        """``{level: max functional at that level}``."""
        lev = self.table["level"]
        val = self.table["functional"]
        return {int(j): float(np.max(val[lev == j])) for j in np.unique(lev)}

    def flatness(self) -> float:
        """``max/min`` of the per-level maxima (1 means perfectly flat)."""
        prof = np.array(list(self.level_profile().values()))
        return float(prof.max() / prof.min())

    def rows(self):
        for i in range(len(self.table["functional"])):
            yield {c: self.table[c][i] for c in _FP_COLUMNS}

    def to_csv(self, path=None) -> Optional[str]:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(_FP_COLUMNS)
        for row in self.rows():
            wr.writerow([row["cube"], int(row["level"])] + [format(float(row[c]), ".17g") for c in _FP_COLUMNS[2:]])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)
        return None

    def to_dict(self) -> dict:
        wc = None if self.worst_cube is None else self.worst_cube.label()
        return {
            "condition": self.condition,
            "kappa": self.kappa,
            "worst_cube": wc,
            "cubes": len(self.table["functional"]),
            "level_profile": {str(k): v for k, v in self.level_profile().items()},
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _full_indicator_norms(phi, cubes: Sequence[DyadicCube], per_side: Optional[int] = None) -> np.ndarray:
    """Indicator norms over the whole cube, also where it sticks out of the box.

    The Phi-function is evaluated by its formula outside the box.
    """
    phi = as_phi(phi)
    n = phi.n
    per_side = per_side or (32 if n == 1 else 8)
    out = []
    for Q in cubes:
        h = Q.side / per_side
        axes = [Q.lo[d] + (np.arange(per_side) + 0.5) * h for d in range(n)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(1, -1, n)
        bound = phi.bind(pts.reshape(-1, n)).take(np.arange(pts.shape[1])[None, :])
        v, *_ = batch_norms(bound, np.ones((1, pts.shape[1])), h**n)
        out.append(v[0])
    return np.asarray(out)


def _cube_indicator_norms(phi, cubes: Sequence[DyadicCube], level: int) -> np.ndarray:
    if level < 0:
        return _full_indicator_norms(phi, cubes)
    return indicator_norms(phi, cubes)


def _weight_ratios(phi, g: GridFunction, level: int, count: int) -> np.ndarray:
    """``||chi_Q g|| / ||chi_Q||`` for every cube of a lattice level.

    Cubes coarser than the box see the weight on the box only; cubes finer
    than a cell see a constant weight, where the ratio is the cell value.
    """
    N, n = g.cells_per_side, g.n
    if level <= 0:
        r, _ = level_norm_ratios(phi, g, 0)
        return np.full(count, r[0])
    depth = g.depth
    if level <= depth:
        r, _ = level_norm_ratios(phi, g, level)
        return r
    shift = level - depth
    M = 1 << level
    idx = np.unravel_index(np.arange(count), (M,) * n)
    cell = tuple(i >> shift for i in idx)
    return g.values[cell]


def _pointwise_le(p: Field, q: Field) -> bool:
    pts = np.vstack([p.sample_points(), q.sample_points()])
    return bool(np.all(p(pts) <= q(pts) + 1e-12))


def _fp_core(p: ExponentField, q: ExponentField, afactor, K: Kernel, phi_v, phi_w, weights: WeightPair,
             lattice: CubeLattice, tol: float, condition: str, params: dict) -> FPReport:
    if lattice.box != weights.v.box:
        raise DomainError("lattice and weights live on different boxes")
    vinv = weights.v.with_values(1.0 / weights.v.values)
    cols = {c: [] for c in _FP_COLUMNS}
    cube_objs = []
    for level in lattice.levels:
        cubes = lattice.level_cubes(level)
        m = len(cubes)
        side = lattice.side(level)
        a = afactor(cubes)
        kt = float(K.k_tilde(side))
        ind = _cube_indicator_norms(q, cubes, level) / _cube_indicator_norms(p, cubes, level)
        rv = _weight_ratios(phi_v, vinv, level, m)
        rw = _weight_ratios(phi_w, weights.w, level, m)
        val = a * kt * ind * rv * rw
        cols["cube"].extend(Q.label() for Q in cubes)
        cols["level"].append(np.full(m, level))
        cols["side"].append(np.full(m, side))
        cols["a_factor"].append(np.asarray(a, dtype=float) * np.ones(m))
        cols["kernel"].append(np.full(m, kt))
        cols["indicator_ratio"].append(ind)
        cols["v_ratio"].append(np.asarray(rv, dtype=float))
        cols["w_ratio"].append(np.asarray(rw, dtype=float))
        cols["functional"].append(val)
        cube_objs.extend(cubes)
    table = {c: (np.asarray(cols[c]) if c == "cube" else np.concatenate(cols[c])) for c in _FP_COLUMNS}
    vals = table["functional"]
    if not np.all(np.isfinite(vals)):
        kappa = math.inf
        worst = cube_objs[int(np.flatnonzero(~np.isfinite(vals))[0])]
    else:
        i = int(np.argmax(vals))
        kappa, worst = float(vals[i]), cube_objs[i]
    return FPReport(kappa, worst, table, condition, params)


def _check_exponent_order(p: ExponentField, q: ExponentField):
    if not p.minus > 1:
        raise DomainError(f"needs 1 < p^- (got p^- = {p.minus})")
    if not math.isfinite(q.plus):
        raise DomainError("needs q^+ < infinity")
    if not _pointwise_le(p, q):
        raise DomainError("needs p(x) <= q(x) at every point")


def fefferman_phong_thm11(p: ExponentField, q: ExponentField, R: float, S: float, a: CubeFunctional, m: int,
                          K: Kernel, weights: WeightPair, lattice: CubeLattice, tol: float = 1e-10) -> FPReport:
    """Lattice max of ``a(Q)^m Ktilde(l(Q)) (||chi_Q||_q/||chi_Q||_p) <v^-1>_{Rp'} <w>_{Sq}``.

    ``<g>_r`` is the local average ``||chi_Q g||_r / ||chi_Q||_r``.
    """
    _check_exponent_order(p, q)
    if m < 0 or int(m) != m:
        raise DomainError("commutator order must be a nonnegative integer")
    pc = conjugate(p)
    if not R > pc.plus / pc.minus:
        raise DomainError(f"needs R > (p')^+/(p')^- = {pc.plus / pc.minus:.6g} (got R = {R})")
    if not S > q.plus / q.minus:
        raise DomainError(f"needs S > q^+/q^- = {q.plus / q.minus:.6g} (got S = {S})")
    s = ExponentField.promote(combine(pc, None, "scale", R))
    l = ExponentField.promote(combine(q, None, "scale", S))
    weights.local_norms(p, l)
    m = int(m)
    afactor = (lambda cubes: np.ones(len(cubes))) if m == 0 else (lambda cubes: a.values(cubes) ** m)
    params = {"R": R, "S": S, "m": m, "a": a.describe(), "kernel": K.describe()}
    return _fp_core(p, q, afactor, K, GPhiFunction.power(s), GPhiFunction.power(l), weights, lattice, tol,
                    "thm11", params)


def fefferman_phong_thm12(p: ExponentField, q: ExponentField, delta: Optional[Field], m: int, K: Kernel,
                          A: PhiFunction, E: PhiFunction, weights: WeightPair, lattice: CubeLattice,
                          tol: float = 1e-10) -> FPReport:
    """Lattice max of ``||chi_Q||_{n/delta}^m Ktilde(l(Q)) (||chi_Q||_q/||chi_Q||_p) <v^-1>_A <w>_E``.

    ``delta = None`` (or identically 0) makes the first factor 1.
    """
    _check_exponent_order(p, q)
    if m < 0 or int(m) != m:
        raise DomainError("commutator order must be a nonnegative integer")
    m = int(m)
    if not math.isfinite(luxemburg_norm(p, weights.v).value):
        raise DomainError("v must lie in L^p on the box")
    zero_delta = delta is None or (delta.minus == 0 and delta.plus == 0)
    if m == 0 or zero_delta:
        afactor = lambda cubes: np.ones(len(cubes))
        adesc = {"kind": "one"}
    else:
        a = CubeFunctional.variable(delta)
        afactor = lambda cubes: a.values(cubes) ** m
        adesc = a.describe()
    params = {"m": m, "a": adesc, "kernel": K.describe()}
    return _fp_core(p, q, afactor, K, A, E, weights, lattice, tol, "thm12", params)


# --------------------------------------------------------------------------
# condition F
# --------------------------------------------------------------------------


@dataclass
class ConditionFReport:
    """Bounds of items (i), (ii), (iii) on the full sample set and on a coarser one."""

    bounds: dict
    coarse: dict
    stable: dict
    stability_tol: float
    slopes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.item_passed(k) for k in ("i", "ii", "iii"))

    def item_passed(self, item: str) -> bool:
        return bool(math.isfinite(self.bounds[item]) and self.stable[item])

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "items": {
                k: {"bound": self.bounds[k], "coarse": self.coarse[k], "stable": self.stable[k],
                    "pass": self.item_passed(k)}
                for k in ("i", "ii", "iii")
            },
            "stability_tol": self.stability_tol,
            "envelope_slope": self.slopes.get("ii"),
        }


def _lattice_max(func, lattice: CubeLattice, top: int) -> float:
    best = 0.0
    for level in range(lattice.j_min, top + 1):
        cubes = lattice.level_cubes(level)
        best = max(best, float(np.max(func(cubes, level))))
    return best


def check_condition_F(triple: PhiTriple, lattice: CubeLattice, t_samples=321, x_samples: Optional[int] = None,
                      stability_tol: float = 0.1, slope_tol: float = 0.05) -> ConditionFReport:
    """Items (i) ``<chi_Q>_A <chi_Q>_B / <chi_Q>_D``, (ii) ``A^-1 B^-1 / D^-1`` and (iii) ``||chi_Q||_D ||chi_Q||_D* / |Q|``.

    Cube items pass when finite and the full lattice exceeds the lattice
    without its finest level by at most ``stability_tol``.  Item (ii) runs
    over ``t`` in ``[1e-16, 1e64]`` (or the given samples) and passes when the
    log-log slope of its envelope over the outer quarters of the range stays
    below ``slope_tol``: bounded ratios flatten, power growth does not.
    """
    A, B, D = triple.A, triple.B, triple.D
    Dstar = ConjugatePhi(D)

    def item_i(cubes, level):
        return (_cube_indicator_norms(A, cubes, level) * _cube_indicator_norms(B, cubes, level)
                / _cube_indicator_norms(D, cubes, level))

    def item_iii(cubes, level):
        return (_cube_indicator_norms(D, cubes, level) * _cube_indicator_norms(Dstar, cubes, level)
                / cubes[0].measure)

    top = lattice.j_max
    coarse_top = max(lattice.j_min, top - 1)
    bounds, coarse = {}, {}
    bounds["i"] = _lattice_max(item_i, lattice, top)
    coarse["i"] = _lattice_max(item_i, lattice, coarse_top)
    bounds["iii"] = _lattice_max(item_iii, lattice, top)
    coarse["iii"] = _lattice_max(item_iii, lattice, coarse_top)

    if np.isscalar(t_samples):
        t = np.geomspace(1e-16, 1e64, int(t_samples))
    else:
        t = np.sort(np.asarray(t_samples, dtype=float))
        if np.any(t <= 0):
            raise DomainError("t samples must be positive")
    box = lattice.box
    nx = x_samples or (33 if box.n == 1 else 9)
    axes = [np.linspace(box.lo[d], box.hi[d], nx) for d in range(box.n)]
    xs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.n)
    P = np.repeat(xs, len(t), axis=0)
    T = np.tile(t, len(xs))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ratio = A.bind(P).inverse(T) * B.bind(P).inverse(T) / D.bind(P).inverse(T)
    ratio = np.where(np.isnan(ratio), np.inf, ratio).reshape(len(xs), len(t))
    lt = np.log(t)
    mid, half = 0.5 * (lt[0] + lt[-1]), 0.25 * (lt[-1] - lt[0])
    inner = np.abs(lt - mid) <= half + 1e-12
    bounds["ii"] = float(np.max(ratio))
    coarse["ii"] = float(np.max(ratio[:, inner])) if np.any(inner) else bounds["ii"]
    # growth rate of the envelope over the outer quarters of the log-t range
    env = np.log(np.max(ratio, axis=0))
    hi_i, lo_i = int(np.argmax(lt >= mid + half - 1e-12)), int(np.flatnonzero(lt <= mid - half + 1e-12)[-1])
    with np.errstate(invalid="ignore"):
        slope_hi = (env[-1] - env[hi_i]) / (lt[-1] - lt[hi_i]) if hi_i < len(t) - 1 else 0.0
        slope_lo = (env[0] - env[lo_i]) / (lt[lo_i] - lt[0]) if lo_i > 0 else 0.0
    slopes = {"ii": float(max(slope_hi, slope_lo))}

    stable = {k: bool(math.isfinite(bounds[k]) and bounds[k] <= (1.0 + stability_tol) * coarse[k]) for k in ("i", "iii")}
    stable["ii"] = bool(math.isfinite(bounds["ii"]) and slopes["ii"] < slope_tol)
    return ConditionFReport(bounds, coarse, stable, stability_tol, slopes)
