"""Dyadic majorant of commutators, stopping-time cube families and local cube sums."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .domain import Box, CubeLattice, DyadicCube, GridFunction, expand_blocks, level_blocks, random_indicator_sum
from .exceptions import DomainError
from .exponents import ExponentField, Field, combine, conjugate
from .gphi import PhiFunction
from .operators import Kernel
from .spaces import as_phi, batch_norms, disjoint_sum_ratio, indicator_norms, level_norm_ratios

__all__ = [
    "ProofExponents",
    "proof_exponents",
    "window_indices",
    "dyadic_majorant",
    "local_sum_bound_check",
    "overlap_sum_ratio",
    "stopping_functional",
    "StoppingFamily",
    "build_stopping_family",
    "StoppingConstants",
    "stopping_constants",
    "random_disjoint_family",
]


# --------------------------------------------------------------------------
# auxiliary exponents of the two-weight argument
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProofExponents:
    """``s = R p'``, ``l = S q`` and the derived ``1/omega = 1/s + 1/mu``, ``1/tau = 1/l + 1/nu``."""

    s: ExponentField
    l: ExponentField
    mu: float
    nu: float
    mu_range: tuple
    nu_range: tuple
    omega: ExponentField
    tau: ExponentField

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "nu": self.nu,
            "mu_range": list(self.mu_range),
            "nu_range": list(self.nu_range),
            "omega": [self.omega.minus, self.omega.plus],
            "tau": [self.tau.minus, self.tau.plus],
        }


def _harmonic(a: Field, c: float) -> ExponentField:
    """Exponent ``r`` with ``1/r = 1/a + 1/c``."""
    return ExponentField.promote(combine(a, Field.constant(a.box, c), "sum"))


def proof_exponents(p: ExponentField, q: ExponentField, R: float, S: float,
                    mu: Optional[float] = None, nu: Optional[float] = None) -> ProofExponents:
    """Auxiliary exponents with ``(s')^+ < mu < p^-`` and ``(l')^+ < nu < (q^+)'``.

    Unset ``mu``/``nu`` take the midpoints of their admissible intervals.
    """
    pc = conjugate(p)
    s = ExponentField.promote(combine(pc, None, "scale", R))
    l = ExponentField.promote(combine(q, None, "scale", S))
    s_conj_plus = conjugate(s).plus
    l_conj_plus = conjugate(l).plus
    mu_range = (s_conj_plus, p.minus)
    qp = q.plus
    nu_range = (l_conj_plus, qp / (qp - 1.0))
    if not mu_range[0] < mu_range[1]:
        raise DomainError(f"(s')^+ = {mu_range[0]:.6g} must be below p^- = {mu_range[1]:.6g}; enlarge R")
    if not nu_range[0] < nu_range[1]:
        raise DomainError(f"(l')^+ = {nu_range[0]:.6g} must be below (q^+)' = {nu_range[1]:.6g}; enlarge S")
    mu = 0.5 * (mu_range[0] + mu_range[1]) if mu is None else float(mu)
    nu = 0.5 * (nu_range[0] + nu_range[1]) if nu is None else float(nu)
    if not mu_range[0] < mu < mu_range[1]:
        raise DomainError(f"mu = {mu} outside the admissible interval {mu_range}")
    if not nu_range[0] < nu < nu_range[1]:
        raise DomainError(f"nu = {nu} outside the admissible interval {nu_range}")
    return ProofExponents(s, l, mu, nu, mu_range, nu_range, _harmonic(s, mu), _harmonic(l, nu))


# --------------------------------------------------------------------------
# 3Q windows of an aligned level
# --------------------------------------------------------------------------


def window_indices(N: int, n: int, level: int):
    """``(idx, valid)`` of shape ``(2**(level*n), (3s)**n)``: flat cells of every ``3Q`` at a level.

    Cells of ``3Q`` outside the box get ``valid = False`` (and index 0).  Rows
    follow the lexicographic cube order.
    """
    M = 1 << level
    if M > N:
        raise DomainError(f"level {level} is finer than the grid ({N} cells per side)")
    s = N // M
    flat = np.arange(N**n).reshape((N,) * n)
    padded = np.pad(flat, s, constant_values=-1)
    win = sliding_window_view(padded, (3 * s,) * n)[(slice(None, None, s),) * n]
    win = win.reshape(M**n, (3 * s) ** n)
    valid = win >= 0
    return np.where(valid, win, 0), valid


def _coarse_levels(n: int, lattice: Optional[CubeLattice]) -> int:
    # cubes of side >= sqrt(n) * box side see every pair of box points
    j_lo = -math.ceil(0.5 * math.log2(n)) if n > 1 else 0
    if lattice is not None:
        j_lo = min(j_lo, lattice.j_min)
    return j_lo


def _subcell_tail(K: Kernel, h: float, n: int) -> float:
    """``sum_{s >= 2} Kbar(h 2^(-s-1)) (3 h 2^(-s))^n``: the cubes strictly inside a cell."""
    s = np.arange(2, 1000)
    ell = h * np.exp2(-s.astype(float))
    ell = ell[ell > 1e-290]
    with np.errstate(over="ignore", invalid="ignore"):
        terms = K.k_bar(0.5 * ell) * (3.0 * ell) ** n
    terms = terms[np.isfinite(terms)]
    return float(np.sum(terms))


def dyadic_majorant(K: Kernel, b: Optional[GridFunction], m: int, f: GridFunction,
                    lattice: Optional[CubeLattice] = None, return_info: bool = False):
    """``sum_Q Kbar(l(Q)/2) sum_j C(m,j) |b(x) - b_Q|^(m-j) chi_Q(x) int_{3Q} |b - b_Q|^j f`` at the midpoints.

    The sum runs over every dyadic cube containing a midpoint: coarse cubes
    down to side ``sqrt(n)`` times the box, all aligned levels, and the cubes
    strictly inside a cell (summed in closed form).  ``lattice`` may only
    extend the coarse end.  Piecewise-constant ``b`` and ``f`` make every
    cube integral exact.
    """
    if m < 0 or int(m) != m:
        raise DomainError("commutator order must be a nonnegative integer")
    m = int(m)
    if K.n != f.n:
        raise DomainError("kernel and grid dimensions differ")
    fv = np.asarray(f.values, dtype=float)
    if np.any(fv < 0):
        raise DomainError("the majorant is defined for f >= 0")
    if m > 0 and b is None:
        raise DomainError("commutators of order m >= 1 need a symbol b")
    if b is not None and (b.box != f.box or b.values.shape != fv.shape):
        raise DomainError("symbol and function live on different grids")
    if lattice is not None and lattice.box != f.box:
        raise DomainError("lattice and grid function live on different boxes")
    N, n, h = f.cells_per_side, f.n, f.cell_width
    bv = np.zeros(fv.shape) if b is None else np.asarray(b.values, dtype=float)
    side = f.box.side
    binom = [math.comb(m, j) for j in range(m + 1)]
    out = np.zeros(fv.shape)
    fflat, bflat = fv.reshape(-1), bv.reshape(-1)
    clipped_windows = 0

    def level_term(level: int) -> np.ndarray:
        nonlocal clipped_windows
        idx, valid = window_indices(N, n, level)
        fw = np.where(valid, fflat[idx], 0.0) * h**n
        bw = bflat[idx]
        bq = level_blocks(bv, level, n).mean(axis=1)
        clipped_windows += int(np.count_nonzero(~valid.all(axis=1)))
        dev = np.abs(bw - bq[:, None])
        bq_cells = expand_blocks(bq, level, N, n)
        xdev = np.abs(bv - bq_cells)
        term = np.zeros(fv.shape)
        for j in range(m + 1):
            Ij = np.sum(fw if j == 0 else dev**j * fw, axis=1)
            term = term + binom[j] * (1.0 if j == m else xdev ** (m - j)) * expand_blocks(Ij, level, N, n)
        return term

    j_lo = _coarse_levels(n, lattice)
    t0 = level_term(0)
    kbar_coarse = sum(float(K.k_bar(0.5 * side * 2.0 ** (-j))) for j in range(j_lo, 1))
    out = out + kbar_coarse * t0
    for level in range(1, f.depth + 1):
        out = out + float(K.k_bar(0.5 * side * 2.0 ** (-level))) * level_term(level)

    # cube of side h/2 holding the midpoint: its 3Q is the own cell plus half of each upper neighbour
    pad = np.pad(fv, [(0, 1)] * n)
    bpad = np.pad(bv, [(0, 1)] * n)
    half = np.zeros(fv.shape)
    for shift in np.ndindex(*(2,) * n):
        wt = 0.5 ** sum(shift)
        sl = tuple(slice(s, s + N) for s in shift)
        dev = np.abs(bpad[sl] - bv)
        half = half + wt * (pad[sl] if m == 0 else dev**m * pad[sl])
    out = out + float(K.k_bar(0.25 * h)) * half * h**n
    if m == 0:
        out = out + _subcell_tail(K, h, n) * fv
    result = f.with_values(out)
    if not return_info:
        return result
    edge = np.zeros(fv.shape, dtype=bool)
    for d in range(n):
        sl = [slice(None)] * n
        sl[d] = [0, N - 1]
        edge[tuple(sl)] = True
    info = {
        "levels": (j_lo, f.depth),
        "clipped_windows": clipped_windows,
        # f meeting the boundary layer means part of the true 3Q mass would lie outside the box
        "clipped": bool(np.any(fv[edge] != 0)),
    }
    return result, info


# --------------------------------------------------------------------------
# local cube sums
# --------------------------------------------------------------------------


def _subcube_rows(Q0: DyadicCube, level: int, n: int) -> np.ndarray:
    """Row numbers (lexicographic order at ``level``) of the sub-cubes of ``Q0``."""
    j0 = max(Q0.level, 0)
    r = 1 << (level - j0)
    base = np.array(Q0.index if Q0.level > 0 else (0,) * n) * r
    M = 1 << level
    axes = [base[d] + np.arange(r) for d in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index(tuple(g.ravel() for g in grids), (M,) * n)


def _window_norms(phi, f: GridFunction, level: int, rows=None, tol: float = 1e-10):
    """``(||chi_{3Q} f||, ||chi_{3Q}||)`` for the cubes of an aligned level (3Q clipped to the box)."""
    phi = as_phi(phi)
    N, n = f.cells_per_side, f.n
    idx, valid = window_indices(N, n, level)
    if rows is not None:
        idx, valid = idx[rows], valid[rows]
    bound = phi.bind_grid(N).take(idx)
    w = valid * f.cell_measure
    vals = np.where(valid, np.abs(f.values.reshape(-1)[idx]), 0.0)
    num, *_ = batch_norms(bound, vals, w, tol)
    den, *_ = batch_norms(bound, valid.astype(float), w, tol)
    return num, den


def _check_q0(Q0: DyadicCube, lattice: CubeLattice, f: GridFunction):
    if lattice.box != f.box:
        raise DomainError("lattice and grid function live on different boxes")
    if Q0.shifted or not lattice.j_min <= Q0.level <= lattice.j_max:
        raise DomainError("Q0 must be a dyadic cube of the lattice")
    if Q0.level > f.depth:
        raise DomainError("Q0 is finer than the grid")


def local_sum_bound_check(K: Kernel, f: GridFunction, omega, Q0: DyadicCube, lattice: CubeLattice,
                          delta: float = 1.0, eps: float = 0.0, tol: float = 1e-10):
    """``(LHS, RHS)`` of the local cube-sum bound with its constant set to 1.

    LHS sums ``Kbar(l(Q)/2) |3Q| |Q| ||chi_{3Q} f|| / ||chi_{3Q}||`` over lattice
    sub-cubes of ``Q0``; RHS is ``Ktilde(delta (1+eps) l(Q0)) |3Q0|`` times the
    same average on ``3Q0``.  Norms of ``3Q`` use its part inside the box.
    """
    _check_q0(Q0, lattice, f)
    if not np.any(f.values != 0):
        return 0.0, 0.0
    n = f.n
    j0 = max(Q0.level, 0)
    top = min(lattice.j_max, f.depth)
    lhs = 0.0
    for level in range(j0, top + 1):
        rows = _subcube_rows(Q0, level, n)
        num, den = _window_norms(omega, f, level, rows, tol)
        ell = lattice.side(level)
        mass = 3.0**n * ell ** (2 * n)
        lhs += float(K.k_bar(0.5 * ell)) * mass * float(np.sum(num / den))
    num0, den0 = _window_norms(omega, f, j0, _subcube_rows(Q0, j0, n), tol)
    ell0 = Q0.side
    rhs = float(K.k_tilde(delta * (1.0 + eps) * ell0)) * 3.0**n * ell0**n * float(num0[0] / den0[0])
    return lhs, rhs


def overlap_sum_ratio(p: Field, f: GridFunction, g: GridFunction, Q0: DyadicCube, d: int,
                      tol: float = 1e-10) -> float:
    """``sum_{Q in O_d} ||f chi_{3Q}||_p ||g chi_{3Q}||_{p'}`` over ``||f chi_{3Q0}||_p ||g chi_{3Q0}||_{p'}``.

    ``O_d`` holds the dyadic sub-cubes of ``Q0`` with side ``2^-d l(Q0)``.
    """
    if d < 0:
        raise DomainError("depth d must be nonnegative")
    if f.box != g.box or f.values.shape != g.values.shape:
        raise DomainError("f and g live on different grids")
    n = f.n
    j0 = max(Q0.level, 0)
    level = j0 + d
    if level > f.depth:
        raise DomainError(f"level {level} is finer than the grid")
    pc = conjugate(p)
    rows = _subcube_rows(Q0, level, n)
    nf, _ = _window_norms(p, f, level, rows, tol)
    ng, _ = _window_norms(pc, g, level, rows, tol)
    rows0 = _subcube_rows(Q0, j0, n)
    nf0, _ = _window_norms(p, f, j0, rows0, tol)
    ng0, _ = _window_norms(pc, g, j0, rows0, tol)
    den = float(nf0[0] * ng0[0])
    num = float(np.sum(nf * ng))
    if den == 0:
        return 0.0
    return num / den


# --------------------------------------------------------------------------
# stopping-time families
# --------------------------------------------------------------------------


def stopping_functional(tau, gw: GridFunction, lattice: CubeLattice, tol: float = 1e-10) -> dict:
    """``{level: G}`` with ``G(Q) = ||chi_Q gw||_tau / ||chi_Q||_tau`` on every aligned lattice level.

    Levels coarser than the box collapse onto the box (level 0).
    """
    if lattice.box != gw.box:
        raise DomainError("lattice and grid function live on different boxes")
    if np.any(gw.values < 0):
        raise DomainError("G is defined for nonnegative g w")
    lo = max(lattice.j_min, 0)
    hi = min(lattice.j_max, gw.depth)
    out = {}
    for level in range(lo, hi + 1):
        out[level], _ = level_norm_ratios(tau, gw, level, tol)
    return out


def _expand_to(arr: np.ndarray, level: int, J: int, n: int) -> np.ndarray:
    return expand_blocks(arr, level, 1 << J, n).reshape(-1)


@dataclass
class StoppingFamily:
    """Maximal cubes ``Q_{k,j}`` with ``G > alpha^k``, residuals ``F_{k,j}`` and the packing constant ``Pi``.

    Measures are exact counts of finest-level cells (``cell_measure`` each).
    """

    alpha: float
    box: Box
    finest: int
    k_range: tuple
    cubes: dict
    measures: dict
    overlap: dict
    residual: dict
    G: dict
    Pi: float
    cell_measure: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v) for k, v in self.checks.items() if isinstance(v, bool))

    def D_measure(self, k: int) -> int:
        return int(sum(self.measures.get(k, [])))

    def to_dict(self) -> dict:
        levels = []
        for k in range(self.k_range[0], self.k_range[1] + 1):
            rows = []
            for i, (lev, idx) in enumerate(self.cubes[k]):
                rows.append({
                    "level": lev,
                    "index": list(idx),
                    "G": self.G[k][i],
                    "measure": self.measures[k][i] * self.cell_measure,
                    "overlap_next": self.overlap[k][i] * self.cell_measure,
                    "residual": self.residual[k][i] * self.cell_measure,
                })
            levels.append({"k": k, "threshold": self.alpha**k, "cubes": rows})
        return {
            "alpha": self.alpha,
            "Pi": self.Pi,
            "box": self.box.to_dict(),
            "finest_level": self.finest,
            "levels": levels,
            "checks": self.checks,
        }

    def to_json(self, path=None) -> Optional[str]:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=False)
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text + "\n")
        return None


def _class_of(G: np.ndarray, alpha: float) -> np.ndarray:
    """Integer ``k`` with ``alpha^k < G <= alpha^(k+1)`` (undefined where ``G = 0``)."""
    with np.errstate(divide="ignore"):
        k = np.ceil(np.log(np.where(G > 0, G, 1.0)) / math.log(alpha)).astype(int) - 1
    # repair rounding at the class boundaries
    thr = np.power(alpha, k.astype(float))
    k = np.where(G <= thr, k - 1, k)
    k = np.where(G > np.power(alpha, (k + 1).astype(float)), k + 1, k)
    return k


def build_stopping_family(G: dict, alpha: float, lattice: CubeLattice) -> StoppingFamily:
    """Top-down selection of the inclusion-maximal lattice cubes with ``G(Q) > alpha^k``.

    ``G`` maps aligned levels to per-cube values in lexicographic order, as
    from :func:`stopping_functional`.  ``k`` runs from the class of the
    weakest root to the class of the largest value.
    """
    if not alpha > 1:
        raise DomainError("stopping threshold base alpha must exceed 1")
    if not G:
        raise DomainError("G holds no levels")
    n = lattice.n
    levels = sorted(G)
    for lev in levels:
        arr = np.asarray(G[lev], dtype=float)
        if arr.shape != ((1 << lev) ** n,):
            raise DomainError(f"G at level {lev} has {arr.size} entries, expected {(1 << lev) ** n}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise DomainError("G values must be finite and nonnegative")
    if levels != list(range(levels[0], levels[-1] + 1)):
        raise DomainError("G levels must be consecutive")
    J = levels[-1]
    Gl = {lev: np.asarray(G[lev], dtype=float) for lev in levels}
    allG = np.concatenate([Gl[lev] for lev in levels])
    roots = Gl[levels[0]]
    box = lattice.box
    cell_measure = box.volume * 2.0 ** (-J * n)
    total = (1 << J) ** n
    if not np.any(allG > 0):
        fam = StoppingFamily(alpha, box, J, (0, -1), {}, {}, {}, {}, {}, 0.0, cell_measure)
        fam.checks = {"nonempty": False, "F_disjoint": True, "Pi_below_alpha": True, "A": True, "B": True,
                      "fixed_k_disjoint": True, "classes_nested": True, "sandwich_violations": 0}
        return fam
    k_lo = int(_class_of(np.array([roots[roots > 0].min() if np.any(roots > 0) else allG[allG > 0].min()]), alpha)[0])
    k_hi = int(_class_of(np.array([allG.max()]), alpha)[0])

    cubes, measures, Gsel, labels = {}, {}, {}, {}
    fixed_k_ok = True
    for k in range(k_lo, k_hi + 2):
        thr = alpha**k
        lab = np.full(total, -1, dtype=np.int64)
        covered_prev = None
        sel_list, meas, gs = [], [], []
        for lev in levels:
            sat = Gl[lev] > thr
            if covered_prev is None:
                covered = np.zeros(sat.shape, dtype=bool)
            else:
                covered = expand_blocks(covered_prev, lev - 1, 1 << lev, n).reshape(-1)
            sel = sat & ~covered
            if np.any(sel):
                ids = np.flatnonzero(sel)
                first = len(sel_list)
                per = np.full(sat.shape, -1, dtype=np.int64)
                per[ids] = first + np.arange(len(ids))
                cells = _expand_to(per, lev, J, n)
                hit = cells >= 0
                if np.any(lab[hit] >= 0):
                    fixed_k_ok = False
                lab = np.where(hit, cells, lab)
                M = 1 << lev
                for i in ids:
                    sel_list.append((lev, tuple(int(v) for v in np.unravel_index(i, (M,) * n))))
                    gs.append(float(Gl[lev][i]))
                meas.extend([(1 << (J - lev)) ** n] * len(ids))
            covered_prev = covered | sat
        labels[k] = lab
        cubes[k], measures[k], Gsel[k] = sel_list, meas, gs
        if sum(meas) != int(np.count_nonzero(lab >= 0)):
            fixed_k_ok = False

    overlap, residual = {}, {}
    owners = np.zeros(total, dtype=np.int64)
    r_max = 0.0
    for k in range(k_lo, k_hi + 1):
        lab, nxt = labels[k], labels[k + 1]
        nq = len(cubes[k])
        inside_next = np.bincount(lab[(lab >= 0) & (nxt >= 0)], minlength=nq)
        F = np.bincount(lab[(lab >= 0) & (nxt < 0)], minlength=nq)
        overlap[k] = [int(v) for v in inside_next]
        residual[k] = [int(v) for v in F]
        owners += (lab >= 0) & (nxt < 0)
        if nq:
            r_max = max(r_max, float(np.max(inside_next / np.asarray(measures[k], dtype=float))))
    # strict inequalities need a margin: half the smallest possible ratio increment
    Pi = alpha * (r_max + 0.5 / total)

    # every cube of class k lies inside a selected cube of level k
    nested = True
    for lev in levels:
        cls = _class_of(Gl[lev], alpha)
        pos = Gl[lev] > 0
        M = 1 << lev
        for k in range(k_lo, k_hi + 1):
            mask = pos & (cls == k)
            if not np.any(mask):
                continue
            cells = _expand_to(mask.astype(np.int8), lev, J, n) > 0
            if np.any(labels[k][cells] < 0):
                nested = False
    sandwich = 0
    for k in range(k_lo, k_hi + 1):
        sandwich += int(sum(1 for g in Gsel[k] if g > alpha ** (k + 1)))

    ratio = Pi / alpha
    A_ok = all(o < ratio * q for k in overlap for o, q in zip(overlap[k], measures[k]))
    B_ok = all(q < f / (1.0 - ratio) for k in residual for f, q in zip(residual[k], measures[k])) if ratio < 1 else False
    drop = k_hi + 1
    fam = StoppingFamily(alpha, box, J, (k_lo, k_hi),
                         {k: cubes[k] for k in range(k_lo, drop)},
                         {k: measures[k] for k in range(k_lo, drop)},
                         overlap, residual,
                         {k: Gsel[k] for k in range(k_lo, drop)},
                         Pi, cell_measure)
    fam.checks = {
        "nonempty": True,
        "fixed_k_disjoint": bool(fixed_k_ok),
        "F_disjoint": bool(np.all(owners <= 1)),
        "Pi_below_alpha": bool(Pi < alpha),
        "A": bool(A_ok),
        "B": bool(B_ok),
        "classes_nested": bool(nested),
        "sandwich_violations": sandwich,
    }
    return fam


# --------------------------------------------------------------------------
# constants behind the choice of alpha
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingConstants:
    """Lattice measurements of the doubling, two-sided indicator and disjoint-sum constants."""

    C_tau: float
    C_star: float
    C_star_star: float
    G_tau: float

    @property
    def product(self) -> float:
        return self.C_tau * self.C_star * self.C_star_star * self.G_tau

    def alpha(self, margin: float = 1.05) -> float:
        return margin * max(self.product, 1.0)

    def to_dict(self) -> dict:
        return {"C_tau": self.C_tau, "C_star": self.C_star, "C_star_star": self.C_star_star,
                "G_tau": self.G_tau, "product": self.product}


def random_disjoint_family(lattice: CubeLattice, rng: np.random.Generator, size: int, max_level: Optional[int] = None):
    """Up to ``size`` pairwise disjoint lattice cubes: random cubes, skipping any that meet earlier picks."""
    lo = max(lattice.j_min, 0)
    hi = lattice.j_max if max_level is None else min(lattice.j_max, max_level)
    picks = []
    for _ in range(8 * size):
        if len(picks) >= size:
            break
        lev = int(rng.integers(lo, hi + 1))
        M = 1 << lev
        idx = tuple(int(v) for v in rng.integers(0, M, size=lattice.n))
        side = lattice.side(lev)
        Q = DyadicCube(lo=tuple(lattice.box.lo[d] + idx[d] * side for d in range(lattice.n)), side=side,
                       level=lev, index=idx)
        if any(Q.contains_cube(P) or P.contains_cube(Q) for P in picks):
            continue
        picks.append(Q)
    return picks


def stopping_constants(tau: Field, lattice: CubeLattice, trials: int = 20, seed: int = 0,
                       cells_per_side: Optional[int] = None) -> StoppingConstants:
    """Measure ``C_tau`` (parent/child indicator norms), ``C*_tau``, ``C**_tau`` and ``G_tau`` on the lattice."""
    n = lattice.n
    lo = max(lattice.j_min, 0)
    hi = lattice.j_max
    tc = conjugate(tau)
    C_tau, lo_prod, hi_prod = 1.0, math.inf, 0.0
    prev = None
    for lev in range(lo, hi + 1):
        cubes = lattice.level_cubes(lev)
        a = indicator_norms(tau, cubes)
        b = indicator_norms(tc, cubes)
        prod = a * b / cubes[0].measure
        lo_prod, hi_prod = min(lo_prod, float(prod.min())), max(hi_prod, float(prod.max()))
        if prev is not None:
            parent = expand_blocks(prev, lev - 1, 1 << lev, n).reshape(-1)
            C_tau = max(C_tau, float(np.max(parent / a)))
        prev = a
    N = cells_per_side or (1 << min(max(hi, 1), 10 if n == 1 else 7))
    rng = np.random.default_rng(seed)
    G_tau = 0.0
    for _ in range(trials):
        f = random_indicator_sum(lattice.box, N, rng)
        g = random_indicator_sum(lattice.box, N, rng)
        fam = random_disjoint_family(lattice, rng, size=int(rng.integers(2, 9)), max_level=int(math.log2(N)))
        if fam:
            G_tau = max(G_tau, disjoint_sum_ratio(tau, f, g, fam))
    # the one-cube family {box} has ratio exactly 1
    return StoppingConstants(C_tau, 1.0 / lo_prod, hi_prod, max(G_tau, 1.0))
