"""Generalized Phi-functions of power-log type, their inverses and conjugates.

``phi(x, t) = t**alpha(x) * log(e + t)**theta(x)`` with the natural logarithm.
A Phi-function is *bound* to a set of points before evaluation so that the
per-point parameters are sampled once; the bound object is a plain callable
in ``t``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import Box
from .exceptions import DomainError
from .exponents import ExponentField, Field, combine, conjugate

__all__ = [
    "PhiFunction",
    "GPhiFunction",
    "ConjugatePhi",
    "PhiTriple",
    "young_defect",
    "build_example_triple",
    "DEFAULT_T_GRID",
]

DEFAULT_T_GRID = np.geomspace(1e-8, 1e8, 400)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _points(x, n: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if n == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    return pts


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("Phi-functions are defined for t >= 0 only")
    return t


class BoundPhi(ABC):
    """A Phi-function restricted to fixed points; calls broadcast over ``t``."""

    shape: tuple

    @abstractmethod
    def __call__(self, t) -> np.ndarray: ...

    @abstractmethod
    def take(self, idx) -> "BoundPhi": ...

    def inverse(self, s, tol: float = 1e-12) -> np.ndarray:
        """``inf{u >= 0 : phi(u) >= s}`` by bracketing and bisection."""
        s = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(s.shape, self.shape)
        s = np.broadcast_to(s, shape).astype(float)
        out = np.zeros(shape)
        pos = s > 0
        if not np.any(pos):
            return out
        lo = np.zeros(shape)
        hi = np.ones(shape)
        for _ in range(400):
            small = pos & (self(hi) < s)
            if not np.any(small):
                break
            lo = np.where(small, hi, lo)
            hi = np.where(small, hi * 2.0, hi)
        lo_try = hi.copy()
        for _ in range(400):
            big = pos & (lo == 0) & (self(lo_try) >= s)
            if not np.any(big):
                break
            hi = np.where(big, lo_try, hi)
            lo_try = np.where(big, lo_try * 0.5, lo_try)
        lo = np.where(pos & (lo == 0), lo_try, lo)
        lo = np.where(self(lo) >= s, 0.0, lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            ge = self(mid) >= s
            hi = np.where(pos & ge, mid, hi)
            lo = np.where(pos & ~ge, mid, lo)
            if np.all((hi - lo) <= tol * hi):
                break
        return np.where(pos, hi, 0.0)


class PhiFunction(ABC):
    """Abstract generalized Phi-function on a box."""

    box: Box

    @property
    def n(self) -> int:
        return self.box.n

    @abstractmethod
    def bind(self, points) -> BoundPhi: ...

    def bind_grid(self, cells_per_side: int) -> BoundPhi:
        cache = self.__dict__.setdefault("_grid_cache", {})
        if cells_per_side not in cache:
            from .domain import GridFunction

            pts = GridFunction.constant(self.box, cells_per_side).midpoints().reshape(-1, self.n)
            cache[cells_per_side] = self.bind(pts)
        return cache[cells_per_side]

    def evaluate(self, x, t) -> np.ndarray:
        pts = _points(x, self.n)
        return self.bind(pts.reshape(-1, self.n))(np.reshape(_check_t(t), -1)).reshape(np.broadcast_shapes(pts.shape[:-1], np.shape(t)))

    def inverse(self, x, s, tol: float = 1e-12) -> np.ndarray:
        pts = _points(x, self.n)
        shape = np.broadcast_shapes(pts.shape[:-1], np.shape(s))
        flat_pts = np.broadcast_to(pts, shape + (self.n,)).reshape(-1, self.n)
        s = np.broadcast_to(np.asarray(s, dtype=float), shape).reshape(-1)
        if np.any(s < 0):
            raise DomainError("inverse is defined for s >= 0 only")
        return self.bind(flat_pts).inverse(s, tol).reshape(shape)


class _BoundGPhi(BoundPhi):
    def __init__(self, alpha: np.ndarray, theta: Optional[np.ndarray]):
        self.alpha = alpha
        self.theta = theta
        self.shape = alpha.shape

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            v = np.power(t, self.alpha)
            if self.theta is not None:
                v = v * np.power(np.log(math.e + t), self.theta)
        return np.where(t == 0, 0.0, v)

    def take(self, idx) -> "_BoundGPhi":
        """Restriction to a subset (or rearrangement) of the bound points."""
        return _BoundGPhi(self.alpha[idx], None if self.theta is None else self.theta[idx])

    def elasticity(self) -> np.ndarray:
        """Upper bound on d log phi / d log t."""
        return self.alpha + (0.0 if self.theta is None else self.theta)

    def inverse(self, s, tol: float = 1e-12) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            power = np.power(s, 1.0 / self.alpha)
        if self.theta is None:
            return power
        # s**(1/alpha) is an upper bound since log(e+t) >= 1
        shape = np.broadcast_shapes(s.shape, self.shape)
        s = np.broadcast_to(s, shape)
        hi = np.broadcast_to(power, shape).astype(float)
        lo = hi.copy()
        pos = s > 0
        for _ in range(2000):
            big = pos & (self(lo) >= s)
            if not np.any(big):
                break
            lo = np.where(big, lo * 0.5, lo)
        width = tol / (2.0 * np.broadcast_to(self.elasticity(), shape))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            ge = self(mid) >= s
            hi = np.where(ge, mid, hi)
            lo = np.where(ge, lo, mid)
            if np.all((hi - lo) <= width * hi):
                break
        return np.where(pos, hi, 0.0)


class GPhiFunction(PhiFunction):
    """``t**alpha(x) * log(e+t)**theta(x)``; ``theta=None`` means the pure power."""

    def __init__(self, alpha: Field, theta: Optional[Field] = None):
        if alpha.minus <= 0 or not math.isfinite(alpha.plus):
            raise DomainError("alpha must satisfy 0 < alpha^- <= alpha^+ < inf")
        if theta is not None:
            if theta.box != alpha.box:
                raise DomainError("alpha and theta must live on the same box")
            if theta.minus < 0:
                raise DomainError("theta must be nonnegative")
            if theta.kind == "constant" and theta.params["value"] == 0.0:
                theta = None
        self.alpha = alpha
        self.theta = theta
        self.box = alpha.box

    @classmethod
    def power(cls, p: Field) -> "GPhiFunction":
        return cls(p, None)

    @classmethod
    def constant(cls, box: Box, alpha: float, theta: float = 0.0) -> "GPhiFunction":
        th = None if theta == 0 else Field.constant(box, theta)
        return cls(Field.constant(box, alpha), th)

    @property
    def is_power(self) -> bool:
        return self.theta is None

    def bind(self, points) -> _BoundGPhi:
        pts = _points(points, self.n)
        a = self.alpha(pts)
        th = None if self.theta is None else self.theta(pts)
        return _BoundGPhi(a, th)

    def describe(self) -> dict:
        return {"alpha": self.alpha.describe(), "theta": None if self.theta is None else self.theta.describe()}

    def __repr__(self):
        return f"GPhiFunction(alpha={self.alpha!r}, theta={self.theta!r})"


class _BoundConjugate(BoundPhi):
    def __init__(self, base: _BoundGPhi, t_grid: np.ndarray, refine: bool):
        self.base = base
        self.t_grid = t_grid
        self.refine = refine
        self.shape = base.shape

    def take(self, idx) -> "_BoundConjugate":
        return _BoundConjugate(self.base.take(idx), self.t_grid, self.refine)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(u.shape, self.shape)
        if self.base.theta is None and np.all(self.base.alpha > 1.0):
            # pure powers: sup_t (t u - t^a) = (a - 1) (u / a)^(a / (a - 1))
            a = np.broadcast_to(self.base.alpha, shape)
            with np.errstate(over="ignore"):
                return (a - 1.0) * np.power(np.broadcast_to(u, shape) / a, a / (a - 1.0))
        uu = np.broadcast_to(u, shape).reshape(-1)
        a = np.broadcast_to(self.base.alpha, shape).reshape(-1)
        th = None if self.base.theta is None else np.broadcast_to(self.base.theta, shape).reshape(-1)
        # evaluate on unique parameter rows only
        cols = [uu, a] + ([] if th is None else [th])
        key = np.stack(cols, axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        res = self._sup(uniq[:, 0], uniq[:, 1], None if th is None else uniq[:, 2])
        return res[inv.reshape(-1)].reshape(shape)

    def _sup(self, u, a, th) -> np.ndarray:
        if self.t_grid is DEFAULT_T_GRID and self.refine and np.all(a >= 1.0) and (th is not None or np.all(a > 1.0)):
            return _stationary_sup(u, a, th)
        out = np.zeros(u.shape)
        tg = self.t_grid
        chunk = max(1, 2_000_000 // len(tg))
        for s in range(0, len(u), chunk):
            sl = slice(s, s + chunk)
            uu, aa = u[sl, None], a[sl, None]
            tt = None if th is None else th[sl, None]
            phi = _BoundGPhi(aa, tt)
            vals = tg[None, :] * uu - phi(tg[None, :])
            k = np.argmax(vals, axis=1)
            best = vals[np.arange(len(k)), k]
            if self.refine:
                lo = tg[np.maximum(k - 1, 0)]
                hi = tg[np.minimum(k + 1, len(tg) - 1)]
                best = np.maximum(best, _golden_max(uu[:, 0], phi, lo, hi))
            out[sl] = np.maximum(best, 0.0)
        return out


def _stationary_sup(u, a, th, iters: int = 60) -> np.ndarray:
    """``sup_t (t u - phi(t))`` for convex ``phi``: root of ``log phi'(e^x) = log u`` by safeguarded Newton.

    Newton steps that leave the bracket fall back to bisection; the value is
    taken at a feasible ``t``, so the result stays a lower bound.
    """
    th0 = np.zeros(u.shape) if th is None else th
    pos = u > 0
    with np.errstate(divide="ignore"):
        lu = np.log(np.where(pos, u, 1.0))

    def h(x):
        L = np.logaddexp(1.0, x)
        sig = 1.0 / (1.0 + math.e * np.exp(-x))
        return (a - 1.0) * x + th0 * np.log(L) + np.log(a + th0 * sig / L) - lu

    lo = np.full(u.shape, -700.0)
    hi = np.full(u.shape, 700.0)
    # phi'(0+) >= u: the sup sits at t = 0
    zero = ~pos | (h(lo) >= 0)
    # safeguarded Newton from the pure-power root
    x = np.clip((lu - np.log(a)) / np.maximum(a - 1.0, 0.1), -699.0, 699.0)
    for _ in range(iters):
        fx = h(x)
        up = fx >= 0
        hi = np.where(up, np.minimum(hi, x), hi)
        lo = np.where(up, lo, np.maximum(lo, x))
        L = np.logaddexp(1.0, x)
        sig = 1.0 / (1.0 + math.e * np.exp(-x))
        k = th0 * sig / L
        slope = (a - 1.0) + k + th0 * sig * ((1.0 - sig) * L - sig) / (L * L * (a + k))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - fx / slope
        x = np.where(np.isfinite(step) & (step >= lo) & (step <= hi), step, 0.5 * (lo + hi))
        if np.all(zero | (np.abs(fx) <= 1e-13) | (hi - lo <= 1e-14 * np.maximum(1.0, np.abs(hi)))):
            break
    f = _BoundGPhi(a, th)
    t = np.exp(x)
    with np.errstate(over="ignore", invalid="ignore"):
        best = t * u - f(t)
    # overflow only happens at the stationary point, where phi(t) = t u / elasticity
    el = a + th0 / ((1.0 + math.e / t) * np.log(math.e + t))
    with np.errstate(over="ignore", divide="ignore"):
        big = np.exp(x + lu + np.log1p(-1.0 / el))
    best = np.where(np.isnan(best), big, best)
    return np.where(zero, 0.0, np.maximum(best, 0.0))


def _golden_max(u, phi: _BoundGPhi, lo, hi, iters: int = 120) -> np.ndarray:
    a = phi.alpha[:, 0]
    th = None if phi.theta is None else phi.theta[:, 0]
    f = _BoundGPhi(a, th)

    def obj(t):
        return t * u - f(t)

    for _ in range(iters):
        x1 = hi - _GOLDEN * (hi - lo)
        x2 = lo + _GOLDEN * (hi - lo)
        left = obj(x1) >= obj(x2)
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    return np.maximum(obj(lo), obj(hi))


class ConjugatePhi(PhiFunction):
    """Grid-sup conjugate ``sup_t (t u - phi(x, t))``, a certified lower bound.

    Pure powers with exponent above 1 use the exact closed form.  With the
    default grid, other concave cases solve the stationarity equation by
    safeguarded Newton in ``log t``.  A custom grid keeps the grid argmax,
    polished by golden-section search on its neighbouring interval.
    """

    def __init__(self, base: GPhiFunction, t_grid=None, refine: bool = True):
        tg = DEFAULT_T_GRID if t_grid is None else np.sort(np.asarray(t_grid, dtype=float).ravel())
        if tg.size == 0:
            raise DomainError("conjugate needs a non-empty t grid")
        if np.any(tg <= 0):
            raise DomainError("conjugate t grid must be positive")
        self.base = base
        self.t_grid = tg
        self.refine = refine
        self.box = base.box

    def bind(self, points) -> _BoundConjugate:
        return _BoundConjugate(self.base.bind(points), self.t_grid, self.refine)

    def __repr__(self):
        return f"ConjugatePhi({self.base!r}, grid={len(self.t_grid)})"


def young_defect(phi: GPhiFunction, x, v, u, t_grid=None) -> np.ndarray:
    """``phi(x, v) + phi*(x, u) - v u`` (nonnegative up to the conjugate's grid defect)."""
    v = _check_t(v)
    u = _check_t(u)
    conj = ConjugatePhi(phi, t_grid)
    return phi.evaluate(x, v) + conj.evaluate(x, u) - v * u


@dataclass(frozen=True)
class PhiTriple:
    A: PhiFunction
    B: PhiFunction
    D: PhiFunction

    def as_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "D": self.D}


def build_example_triple(which: int, p: ExponentField, sigma: float, mu: Optional[Field] = None,
                         nu: Optional[Field] = None, eps: Optional[float] = None) -> tuple[PhiTriple, PhiTriple]:
    """The two model triples satisfying condition F; returns ``(ABD, EHJ)`` (the same triple twice)."""
    if p.minus <= 1:
        raise DomainError("example triples need 1 < p^-")
    pc = conjugate(p)
    threshold = pc.plus / pc.minus
    if not sigma > threshold:
        raise DomainError(f"example triples require sigma > (p')^+/(p')^- = {threshold} (got {sigma})")
    box = p.box
    sp = ExponentField.promote(combine(pc, None, "scale", sigma))
    spc = conjugate(sp)
    if which == 1:
        A = GPhiFunction(sp, sp)
        B = GPhiFunction(spc)
        D = GPhiFunction.constant(box, 1.0, 1.0)
    elif which == 2:
        if mu is None or eps is None:
            raise DomainError("the second example needs mu and eps")
        if nu is None:
            nu = Field.constant(box, 0.0)
        if not (0 < eps < 1):
            raise DomainError("the second example requires eps in (0, 1)")
        if not (mu.minus > 1 and math.isfinite(mu.plus)):
            raise DomainError("the second example requires 1 < mu^- <= mu^+ < inf")
        if nu.minus < 0:
            raise DomainError("the second example requires nu >= 0")
        pts = np.vstack([sp.sample_points(), mu.sample_points()])
        gap = 1.0 / sp(pts) - 1.0 / mu(pts)
        if np.min(gap) <= eps:
            raise DomainError(f"the second example requires 1/(sigma p') - 1/mu > eps; min gap {np.min(gap):.6g} <= {eps}")
        nm = combine(nu, mu, "product")
        alpha = combine(mu, spc, "sum")
        A = GPhiFunction(mu, nm)
        B = GPhiFunction(spc)
        D = GPhiFunction(alpha, combine(alpha, nu, "product"))
    else:
        raise DomainError(f"unknown example {which!r}")
    triple = PhiTriple(A, B, D)
    return triple, triple
