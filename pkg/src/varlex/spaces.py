"""Modulars and Luxemburg norms on grid functions, cube-localized norms and ratios.

The Luxemburg norm ``inf{lam > 0 : rho(f/lam) <= 1}`` is found by bisection
on ``log(lam)``: the bracket starts at ``max|f|`` and is widened by doubling or
halving until it straddles the unit level of the modular.  The returned value
is the upper end of the final bracket, so the modular there never exceeds 1.
Batched variants run one bisection per row of a ``(m, k)`` sample matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .domain import Box, Cube, GridFunction, _aligned_slices, _overlap_weights, level_blocks
from .exceptions import DomainError
from .exponents import Field, conjugate
from .gphi import BoundPhi, ConjugatePhi, GPhiFunction, PhiFunction

__all__ = [
    "NormResult",
    "modular",
    "luxemburg_norm",
    "norm_of_samples",
    "batch_norms",
    "indicator_norm",
    "weighted_norm",
    "cube_norm_ratio",
    "cube_samples",
    "level_norm_ratios",
    "as_phi",
    "indicator_product_ratio",
    "exponent_quotient_ratio",
    "doubling_ratio",
    "disjoint_sum_ratio",
    "holder_ratio",
    "duality_lower_bound",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class NormResult:
    value: float
    modular_at_value: float
    iterations: int
    bracket: tuple = field(default=())

    def to_dict(self) -> dict:
        return {"value": self.value, "modular_at_value": self.modular_at_value, "iterations": self.iterations}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __float__(self) -> float:
        return self.value


def as_phi(p: Union[PhiFunction, Field]) -> PhiFunction:
    """Accept an exponent where a Phi-function is expected (``t**p(x)``)."""
    if isinstance(p, PhiFunction):
        return p
    if isinstance(p, Field):
        return GPhiFunction.power(p)
    raise TypeError(f"expected a Phi-function or exponent field, got {type(p).__name__}")


def _modular_rows(bound: BoundPhi, vals: np.ndarray, weights, lam: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        r = bound(vals / lam[:, None]) * weights
        s = r.sum(axis=1)
    return np.where(np.isfinite(s), s, np.inf)


def batch_norms(bound: BoundPhi, vals: np.ndarray, weights, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER):
    """Luxemburg norms of every row of ``vals`` (nonnegative, shape ``(m, k)``).

    ``bound`` evaluates the Phi-function at matching points (shape ``(m, k)``).
    Returns ``(values, modular_at_values, iterations, lo, hi)`` arrays.
    """
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    vals = np.abs(np.asarray(vals, dtype=float))
    if vals.ndim != 2:
        raise DomainError("batch_norms expects a 2-d sample matrix")
    if not np.all(np.isfinite(vals)):
        raise DomainError("non-finite samples")
    m = vals.shape[0]
    top = vals.max(axis=1) if vals.shape[1] else np.zeros(m)
    zero = top == 0
    lam0 = np.where(zero, 1.0, top)
    mod0 = _modular_rows(bound, vals, weights, lam0)
    lo = lam0.copy()
    hi = lam0.copy()
    # widen the bracket geometrically until rho(hi) <= 1 < rho(lo)
    mhi = mod0.copy()
    step = 2.0
    for _ in range(2200):
        need = (~zero) & (mhi > 1.0)
        if not np.any(need):
            break
        lo = np.where(need, hi, lo)
        hi = np.where(need, hi * step, hi)
        mhi = np.where(need, _modular_rows(bound, vals, weights, hi), mhi)
    mlo = _modular_rows(bound, vals, weights, lo)
    for _ in range(2200):
        need = (~zero) & (mlo <= 1.0)
        if not np.any(need):
            break
        hi = np.where(need, lo, hi)
        mhi = np.where(need, mlo, mhi)
        lo = np.where(need, lo / step, lo)
        mlo = np.where(need, _modular_rows(bound, vals, weights, lo), mlo)
    iters = np.zeros(m, dtype=int)
    active = (~zero) & (hi > lo * (1.0 + tol))
    for _ in range(max_iter):
        if not np.any(active):
            break
        mid = np.sqrt(lo * hi)
        mmid = _modular_rows(bound, vals, weights, mid)
        ok = mmid <= 1.0
        hi = np.where(active & ok, mid, hi)
        mhi = np.where(active & ok, mmid, mhi)
        lo = np.where(active & ~ok, mid, lo)
        iters = iters + active
        active = active & (hi > lo * (1.0 + tol))
    value = np.where(zero, 0.0, hi)
    modv = np.where(zero, 0.0, mhi)
    return value, modv, iters, np.where(zero, 0.0, lo), value


def norm_of_samples(phi_bound: BoundPhi, vals, weights, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> NormResult:
    vals = np.abs(np.asarray(vals, dtype=float)).reshape(1, -1)
    w = np.broadcast_to(np.asarray(weights, dtype=float), vals.shape[1:])[None, :]
    if not np.all(np.isfinite(vals)):
        raise DomainError("non-finite samples")
    if not np.any(vals > 0):
        return NormResult(0.0, 0.0, 0, ())
    bnd = phi_bound.take(np.arange(vals.shape[1])[None, :]) if phi_bound.shape != vals.shape else phi_bound
    v, mv, it, lo, hi = batch_norms(bnd, vals, w, tol, max_iter)
    return NormResult(float(v[0]), float(mv[0]), int(it[0]), (float(lo[0]), float(hi[0])))


def modular(phi, f: GridFunction) -> float:
    """``sum_cells phi(x, |f(x)|) * cell_measure`` (``inf`` on overflow)."""
    phi = as_phi(phi)
    vals = np.abs(f.values.reshape(-1))
    nz = np.nonzero(vals)[0]
    if nz.size == 0:
        return 0.0
    bound = phi.bind_grid(f.cells_per_side).take(nz)
    with np.errstate(over="ignore", invalid="ignore"):
        s = float(np.sum(bound(vals[nz])) * f.cell_measure)
    return s if math.isfinite(s) else math.inf


def luxemburg_norm(phi, f: GridFunction, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> NormResult:
    """Luxemburg norm of a grid function."""
    phi = as_phi(phi)
    vals = np.abs(f.values.reshape(-1))
    if not np.all(np.isfinite(vals)):
        raise DomainError("non-finite samples")
    nz = np.nonzero(vals)[0]
    if nz.size == 0:
        return NormResult(0.0, 0.0, 0, ())
    bound = phi.bind_grid(f.cells_per_side).take(nz[None, :])
    v, mv, it, lo, hi = batch_norms(bound, vals[nz][None, :], f.cell_measure, tol, max_iter)
    return NormResult(float(v[0]), float(mv[0]), int(it[0]), (float(lo[0]), float(hi[0])))


def _subcell_points(Q: Cube, box: Box, per_side: int):
    clip = Q.clip(box)
    if clip is None:
        raise DomainError("cube does not meet the box")
    lo, hi = clip
    h = (hi - lo) / per_side
    axes = [lo[d] + (np.arange(per_side) + 0.5) * h[d] for d in range(box.n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.n)
    return pts, float(np.prod(h))


def indicator_norm(phi, Q: Cube, per_side: Optional[int] = None, tol: float = DEFAULT_TOL) -> NormResult:
    """``||chi_Q||`` by midpoint quadrature on a uniform subdivision of ``Q ∩ box``.

    Independent of any grid, so arbitrarily small cubes are resolved.
    """
    phi = as_phi(phi)
    if per_side is None:
        per_side = 32 if phi.n == 1 else 8
    pts, w = _subcell_points(Q, phi.box, per_side)
    bound = phi.bind(pts)
    return norm_of_samples(bound.take(np.arange(len(pts))[None, :]), np.ones(len(pts)), w, tol)


def indicator_norms(phi, cubes: Sequence[Cube], per_side: Optional[int] = None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Batched :func:`indicator_norm` over many cubes."""
    phi = as_phi(phi)
    if per_side is None:
        per_side = 32 if phi.n == 1 else 8
    if not cubes:
        return np.zeros(0)
    pts, ws = zip(*(_subcell_points(Q, phi.box, per_side) for Q in cubes))
    P = np.stack(pts)
    bound = phi.bind(P.reshape(-1, phi.n)).take(np.arange(P.shape[0] * P.shape[1]).reshape(P.shape[:2]))
    v, *_ = batch_norms(bound, np.ones(P.shape[:2]), np.asarray(ws)[:, None], tol)
    return v


def weighted_norm(p, f: GridFunction, w: GridFunction, tol: float = DEFAULT_TOL) -> NormResult:
    """``||f w||`` under ``t**p(x)`` (or a given Phi-function); ``w`` must be positive."""
    if np.any(w.values <= 0):
        raise DomainError("weights must be strictly positive on every sample")
    return luxemburg_norm(as_phi(p), f * w, tol)


def cube_samples(f: GridFunction, Q: Cube):
    """Flat cell indices and overlap measures of the grid cells meeting ``Q``."""
    N = f.cells_per_side
    sl = _aligned_slices(f.box, N, Q)
    flat = np.arange(N ** f.n).reshape((N,) * f.n)
    if sl is not None:
        if sl == ():
            raise DomainError("cube does not meet the box")
        idx = flat[sl].ravel()
        return idx, np.full(idx.shape, f.cell_measure)
    w = _overlap_weights(f.box, N, Q)
    mask = w > 0
    if not np.any(mask):
        raise DomainError("cube does not meet the box")
    return flat[mask], w[mask]


def cube_norm_ratio(phi, f: GridFunction, Q: Cube, tol: float = DEFAULT_TOL) -> float:
    """``||chi_Q f|| / ||chi_Q||`` on the grid cells meeting ``Q``."""
    phi = as_phi(phi)
    idx, w = cube_samples(f, Q)
    bound = phi.bind_grid(f.cells_per_side).take(np.stack([idx, idx]))
    vals = np.stack([np.abs(f.values.reshape(-1)[idx]), np.ones(len(idx))])
    v, *_ = batch_norms(bound, vals, w[None, :], tol)
    return float(v[0] / v[1])


def level_norm_ratios(phi, f: GridFunction, level: int, tol: float = DEFAULT_TOL,
                      denominators: Optional[np.ndarray] = None):
    """``(ratios, denominators)`` of :func:`cube_norm_ratio` for every cube of an aligned level.

    Rows follow the lexicographic cube order of the lattice.  Levels at or
    coarser than the box (``level <= 0``) are the box itself.
    """
    phi = as_phi(phi)
    N, n = f.cells_per_side, f.n
    lev = max(level, 0)
    idx = level_blocks(np.arange(N ** n).reshape((N,) * n), lev, n)
    bound = phi.bind_grid(N).take(idx)
    vals = np.abs(f.values.reshape(-1)[idx])
    w = f.cell_measure
    num, *_ = batch_norms(bound, vals, w, tol)
    if denominators is None:
        denominators, *_ = batch_norms(bound, np.ones(idx.shape), w, tol)
    return num / denominators, denominators


# --------------------------------------------------------------------------
# quantities whose boundedness the invariant suite checks
# --------------------------------------------------------------------------


def indicator_product_ratio(p: Field, Q: Cube, per_side: Optional[int] = None) -> float:
    """``||chi_Q||_p ||chi_Q||_p' / |Q|`` (bounded above and below for log-Hölder p)."""
    a = indicator_norm(GPhiFunction.power(p), Q, per_side).value
    b = indicator_norm(GPhiFunction.power(conjugate(p)), Q, per_side).value
    m = Q.intersection_measure(p.box)
    return a * b / m


def exponent_quotient_ratio(p: Field, q: Field, beta: Field, Q: Cube, per_side: Optional[int] = None) -> float:
    """``||chi_Q||_p / (||chi_Q||_q ||chi_Q||_beta)`` with ``1/beta = 1/p - 1/q``."""
    a = indicator_norm(p, Q, per_side).value
    b = indicator_norm(q, Q, per_side).value
    c = indicator_norm(beta, Q, per_side).value
    return a / (b * c)


def doubling_ratio(p, Q: Cube, per_side: Optional[int] = None) -> Optional[float]:
    """``||chi_2Q|| / ||chi_Q||``, or ``None`` when ``2Q`` leaves the box."""
    phi = as_phi(p)
    Q2 = Q.dilate(2.0)
    if Q2.is_clipped(phi.box):
        return None
    return indicator_norm(phi, Q2, per_side).value / indicator_norm(phi, Q, per_side).value


def disjoint_sum_ratio(p: Field, f: GridFunction, g: GridFunction, cubes: Sequence[Cube]) -> float:
    """``sum_Q ||chi_Q f||_p ||chi_Q g||_p' / (||f||_p ||g||_p')`` over disjoint cubes."""
    P = GPhiFunction.power(p)
    Pc = GPhiFunction.power(conjugate(p))
    total = 0.0
    for Q in cubes:
        chi = GridFunction.indicator(f.box, f.cells_per_side, Q)
        total += luxemburg_norm(P, f * chi).value * luxemburg_norm(Pc, g * chi).value
    den = luxemburg_norm(P, f).value * luxemburg_norm(Pc, g).value
    return total / den if den > 0 else 0.0


def holder_ratio(phi: GPhiFunction, f: GridFunction, g: GridFunction, conj: Optional[PhiFunction] = None) -> float:
    """``int |f g| / (||f||_phi ||g||_phi*)`` (at most 2 by the generalized Hölder inequality)."""
    conj = ConjugatePhi(phi) if conj is None else conj
    lhs = float(np.sum(np.abs(f.values * g.values)) * f.cell_measure)
    den = luxemburg_norm(phi, f).value * luxemburg_norm(conj, g).value
    if den == 0:
        return 0.0
    return lhs / den


def duality_lower_bound(phi: GPhiFunction, f: GridFunction, trials: int, rng: np.random.Generator,
                        conj: Optional[PhiFunction] = None) -> float:
    """Randomized ``sup {int f g : ||g||_phi* <= 1}`` over ``trials`` candidates.

    Candidates mix random positive fields with powers of ``|f|`` (the
    extremal direction of the sup), each rescaled onto the unit sphere of
    the conjugate space.
    """
    from .domain import random_indicator_sum

    conj = ConjugatePhi(phi) if conj is None else conj
    af = np.abs(f.values)
    amax = float(phi.alpha.plus) + (0.0 if phi.theta is None else float(phi.theta.plus))
    best = 0.0
    for i in range(trials):
        if i % 2 == 0:
            s = rng.uniform(0.0, max(amax - 1.0, 0.0) + 0.5)
            noise = np.exp(rng.normal(scale=0.1, size=af.shape))
            g = np.where(af > 0, af ** s, 0.0) * noise
        else:
            g = random_indicator_sum(f.box, f.cells_per_side, rng).values
        G = GridFunction(f.box, g)
        ng = luxemburg_norm(conj, G).value
        if ng <= 0:
            continue
        best = max(best, float(np.sum(af * g) * f.cell_measure) / ng)
    return best
