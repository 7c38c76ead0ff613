"""Radial kernels, class-D diagnostics, potential operators and order-m commutators.

Discretization of ``T^{b,m} f(x) = int (b(x) - b(y))^m K(x - y) f(y) dy``:
``f`` and ``b`` are piecewise constant on grid cells and the kernel is
integrated exactly (or to near machine precision) over each cell, so the
operator is evaluated at cell midpoints as

    sum_j W[i - j] (b_i - b_j)^m f_j,    W[d] = int_{cell d} K(z) dz.

The binomial expansion turns this into ``m + 1`` convolutions with ``W``.
In 1-d, ``W`` comes from the closed-form radial primitive.  In 2-d, cells
within two cells of the origin use polar integrals of origin-anchored
rectangles and far cells use tensor Gauss-Legendre rules; the difference
between two rule orders is reported as quadrature slack.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as spi
from scipy import signal, special

from .domain import GridFunction
from .exceptions import DomainError

__all__ = [
    "Kernel",
    "FractionalKernel",
    "BesselKernel",
    "TabulatedKernel",
    "AnnulusConstantKernel",
    "CallableKernel",
    "ClassDReport",
    "k_tilde",
    "k_bar",
    "check_class_D",
    "cell_weights",
    "apply_commutator",
    "apply_potential",
    "kernel_from_config",
    "surface_measure",
]


def surface_measure(n: int) -> float:
    """Measure of the unit sphere in R^n (n = 1: two points)."""
    if n == 1:
        return 2.0
    if n == 2:
        return 2.0 * math.pi
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


class Kernel(ABC):
    """Nonnegative radial kernel ``K(x) = k(|x|)`` on R^n."""

    n: int
    smooth: bool = True
    monotone: bool = False

    def __init__(self, n: int):
        if n not in (1, 2):
            raise DomainError("kernels are supported in dimensions 1 and 2")
        self.n = n
        self._weights_cache: dict = {}

    @abstractmethod
    def profile(self, r) -> np.ndarray:
        """Radial profile ``k(r)`` for ``r > 0``."""

    @abstractmethod
    def primitive(self, r) -> np.ndarray:
        """``P(r) = int_0^r s^(n-1) k(s) ds``."""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            return self.profile(np.abs(x))
        return self.profile(np.linalg.norm(x, axis=-1))

    def k_tilde(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("k_tilde needs t > 0")
        return surface_measure(self.n) * self.primitive(t)

    def k_bar(self, t) -> np.ndarray:
        """``sup_{t < r <= 2t} k(r)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("k_bar needs t > 0")
        if self.monotone:
            return self._limit_from_right(t)
        return self._scan_sup(t)

    def _limit_from_right(self, t):
        return self.profile(t)

    def _scan_sup(self, t, points: int = 10_000):
        t = np.asarray(t, dtype=float)
        s = np.linspace(0.0, 1.0, points + 1)[1:]
        out = np.array([np.max(self.profile(ti * (1.0 + s))) for ti in np.atleast_1d(t).ravel()])
        return out.reshape(t.shape)

    def annulus_integral(self, a, b) -> np.ndarray:
        """``int_{a < |z| <= b} K``."""
        return surface_measure(self.n) * (self.primitive(b) - self.primitive(a))

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class FractionalKernel(Kernel):
    """``|x|^(alpha - n)``, ``0 < alpha < n``."""

    monotone = True

    def __init__(self, alpha: float, n: int = 1):
        super().__init__(n)
        if not (0 < alpha < n):
            raise DomainError(f"fractional kernel needs 0 < alpha < n (alpha = {alpha}, n = {n})")
        self.alpha = float(alpha)

    def profile(self, r):
        with np.errstate(divide="ignore"):
            return np.power(np.asarray(r, dtype=float), self.alpha - self.n)

    def primitive(self, r):
        return np.power(np.asarray(r, dtype=float), self.alpha) / self.alpha

    def describe(self):
        return {"kind": "fractional", "alpha": self.alpha, "n": self.n}


class BesselKernel(Kernel):
    """Radial surrogate ``|x|^(beta - n) exp(-lam |x|)`` for the Bessel potential."""

    def __init__(self, beta: float, lam: float, n: int = 1):
        super().__init__(n)
        if not (beta > 0 and lam > 0):
            raise DomainError("bessel-like kernel needs beta > 0 and lambda > 0")
        self.beta = float(beta)
        self.lam = float(lam)
        self.monotone = self.beta <= self.n

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.power(r, self.beta - self.n) * np.exp(-self.lam * r)

    def primitive(self, r):
        r = np.asarray(r, dtype=float)
        return self.lam ** (-self.beta) * special.gamma(self.beta) * special.gammainc(self.beta, self.lam * r)

    def k_bar(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("k_bar needs t > 0")
        if self.monotone:
            return self.profile(t)
        # unimodal with peak at (beta - n)/lam
        peak = (self.beta - self.n) / self.lam
        r = np.clip(peak, t, 2 * t)
        return np.maximum(self.profile(r), np.maximum(self.profile(t), self.profile(2 * t)))

    def describe(self):
        return {"kind": "bessel", "beta": self.beta, "lambda": self.lam, "n": self.n}


class TabulatedKernel(Kernel):
    """Piecewise-linear radial profile through ``(radius, value)`` knots, constant beyond them."""

    smooth = False

    def __init__(self, radii, values, n: int = 1):
        super().__init__(n)
        r = np.asarray(radii, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 1:
            raise DomainError("tabulated kernel needs matching 1-d radius and value arrays")
        if np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise DomainError("tabulated radii must be positive and strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("tabulated kernel values must be finite and nonnegative")
        self.radii, self.values = r, v
        self.monotone = bool(np.all(np.diff(v) <= 0))
        # knots including the origin, with constant extrapolation to r=0
        self._knots = np.concatenate([[0.0], r])
        self._kvals = np.concatenate([[v[0]], v])
        seg = self._segment_integral(self._knots[:-1], self._knots[1:], self._kvals[:-1], self._kvals[1:])
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    @classmethod
    def from_csv(cls, path, n: int = 1) -> "TabulatedKernel":
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(data[:, 0], data[:, 1], n)

    def profile(self, r):
        return np.interp(np.asarray(r, dtype=float), self.radii, self.values)

    def _segment_integral(self, a, b, va, vb):
        # int_a^b s^(n-1) (va + (vb - va)(s - a)/(b - a)) ds, exact
        a, b, va, vb = map(np.asarray, (a, b, va, vb))
        L = b - a
        if self.n == 1:
            return 0.5 * (va + vb) * L
        slope = np.where(L > 0, (vb - va) / np.where(L > 0, L, 1.0), 0.0)
        c0 = va - slope * a
        return c0 * (b**2 - a**2) / 2.0 + slope * (b**3 - a**3) / 3.0

    def primitive(self, r):
        r = np.asarray(r, dtype=float)
        k = np.clip(np.searchsorted(self._knots, r, side="right") - 1, 0, len(self._knots) - 1)
        a = self._knots[k]
        va = self._kvals[k]
        nxt = np.minimum(k + 1, len(self._knots) - 1)
        beyond = k == len(self._knots) - 1
        vb = np.where(beyond, va, self._kvals[nxt])
        b = np.where(beyond, r, self._knots[nxt])
        vr = np.where(beyond, va, va + (vb - va) * np.where(b > a, (r - a) / np.where(b > a, b - a, 1.0), 0.0))
        return self._cum[k] + self._segment_integral(a, r, va, vr)

    def k_bar(self, t):
        t0 = np.asarray(t, dtype=float)
        t = np.atleast_1d(t0)
        if np.any(t <= 0):
            raise DomainError("k_bar needs t > 0")
        out = np.empty(t.shape)
        for i, ti in enumerate(t.ravel()):
            inside = self.radii[(self.radii > ti) & (self.radii <= 2 * ti)]
            cand = np.concatenate([inside, [ti, 2 * ti]])
            out.flat[i] = float(np.max(self.profile(cand)))
        return out.reshape(t0.shape)

    def describe(self):
        return {"kind": "tabulated", "knots": len(self.radii), "n": self.n}


class AnnulusConstantKernel(Kernel):
    """``K(x) = 2^(-k(n - alpha))`` for ``2^k < |x| <= 2^(k+1)``: essentially constant on annuli."""

    smooth = False
    monotone = True

    def __init__(self, alpha: float, n: int = 1):
        super().__init__(n)
        if not (0 < alpha < n):
            raise DomainError("annulus-constant kernel needs 0 < alpha < n")
        self.alpha = float(alpha)

    def _level(self, r):
        return np.ceil(np.log2(r)) - 1.0

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp2(-self._level(r) * (self.n - self.alpha))

    def _limit_from_right(self, t):
        return np.exp2(-np.floor(np.log2(t)) * (self.n - self.alpha))

    def primitive(self, r):
        r0 = np.asarray(r, dtype=float)
        r = np.where(r0 > 0, r0, 1.0)
        n, a = self.n, self.alpha
        k = self._level(r)
        # full annuli below 2^k: sum_{j<k} 2^{-j(n-a)} (2^{(j+1)n} - 2^{jn})/n = (2^n - 1)/n * 2^{k a}/(2^a - 1)
        below = (2.0**n - 1.0) / n * np.exp2(k * a) / (2.0**a - 1.0)
        partial = np.exp2(-k * (n - a)) * (r**n - np.exp2(k * n)) / n
        return np.where(r0 > 0, below + partial, 0.0)

    def describe(self):
        return {"kind": "annulus_constant", "alpha": self.alpha, "n": self.n}


class CallableKernel(Kernel):
    """User radial profile; primitives by adaptive quadrature, ``k_bar`` by a dense scan."""

    smooth = False

    def __init__(self, func: Callable, n: int = 1, breakpoints: Sequence[float] = (), monotone: bool = False):
        super().__init__(n)
        self._func = func
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints if b > 0))
        self.monotone = monotone
        if not math.isfinite(float(self.primitive(1e-6))):
            raise DomainError("kernel is not locally integrable near the origin")

    def profile(self, r):
        return np.asarray(np.vectorize(self._func, otypes=[float])(np.asarray(r, dtype=float)), dtype=float)

    def primitive(self, r):
        r0 = np.asarray(r, dtype=float)
        r = np.atleast_1d(r0)
        out = np.empty(r.shape)
        for i, ri in enumerate(r.ravel()):
            pts = [b for b in self.breakpoints if 0 < b < ri] or None
            val, _ = spi.quad(lambda s: s ** (self.n - 1) * self._func(s), 0.0, ri, points=pts, limit=200)
            out.flat[i] = val
        return out.reshape(r0.shape)

    def describe(self):
        return {"kind": "callable", "n": self.n}


def k_tilde(K: Kernel, t):
    """``int_{|z| <= t} K(z) dz``."""
    return K.k_tilde(t)


def k_bar(K: Kernel, t):
    """``sup_{t < |x| <= 2t} K(x)``."""
    return K.k_bar(t)


@dataclass(frozen=True)
class ClassDReport:
    delta: float
    eps: float
    c_estimate: float
    k_range: tuple
    passed: bool
    ratios: tuple = ()

    @property
    def pass_(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "eps": self.eps,
            "c_estimate": self.c_estimate,
            "k_min": self.k_range[0],
            "k_max": self.k_range[1],
            "pass": self.passed,
        }


def check_class_D(K: Kernel, delta: float, eps: float, k_range=(-10, 10)) -> ClassDReport:
    """Largest ratio ``sup_{2^k<|x|<=2^{k+1}} K / (2^{-kn} int_{delta(1-eps)2^k<|x|<=2delta(1+eps)2^k} K)``."""
    if not delta > 0:
        raise DomainError("class D needs delta > 0")
    if not 0 <= eps < 1:
        raise DomainError("class D needs 0 <= eps < 1")
    k0, k1 = int(k_range[0]), int(k_range[1])
    ratios = []
    for k in range(k0, k1 + 1):
        s = float(K.k_bar(2.0**k))
        avg = float(K.annulus_integral(delta * (1 - eps) * 2.0**k, 2 * delta * (1 + eps) * 2.0**k)) * 2.0 ** (-k * K.n)
        if avg > 0:
            ratios.append(s / avg)
        else:
            ratios.append(math.inf if s > 0 else 0.0)
    c = max(ratios)
    return ClassDReport(float(delta), float(eps), float(c), (k0, k1), bool(math.isfinite(c)), tuple(ratios))


# --------------------------------------------------------------------------
# cell-integrated kernel weights
# --------------------------------------------------------------------------


def _rect_from_origin(K: Kernel, X: float, Y: float) -> float:
    """``int_0^X int_0^Y K(|z|) dz`` for ``X, Y >= 0`` by a polar split at the diagonal."""
    if X <= 0 or Y <= 0:
        return 0.0
    th0 = math.atan2(Y, X)
    f1 = lambda th: float(K.primitive(X / math.cos(th)))
    f2 = lambda th: float(K.primitive(Y / math.sin(th)))
    a, _ = spi.quad(f1, 0.0, th0, epsabs=0.0, epsrel=1e-13, limit=200)
    b, _ = spi.quad(f2, th0, math.pi / 2, epsabs=0.0, epsrel=1e-13, limit=200)
    return a + b


def _signed_rect(K: Kernel, x: float, y: float) -> float:
    return math.copysign(1.0, x) * math.copysign(1.0, y) * _rect_from_origin(K, abs(x), abs(y))


def _rect_integral(K: Kernel, x0, x1, y0, y1) -> float:
    return (_signed_rect(K, x1, y1) - _signed_rect(K, x0, y1) - _signed_rect(K, x1, y0) + _signed_rect(K, x0, y0))


def _gauss_far(K: Kernel, h: float, N: int, order: int) -> np.ndarray:
    xg, wg = np.polynomial.legendre.leggauss(order)
    xg, wg = 0.5 * h * xg, 0.5 * wg
    d = np.arange(N) * h
    X = d[:, None, None, None] + xg[None, None, :, None]
    Y = d[None, :, None, None] + xg[None, None, None, :]
    with np.errstate(divide="ignore"):
        vals = K.profile(np.sqrt(X**2 + Y**2))
    W = np.einsum("ijab,a,b->ij", vals, wg, wg) * h * h
    return W


def cell_weights(K: Kernel, h: float, N: int):
    """``(W, rel_err)``: weights for offsets ``0..N-1`` per axis (quadrant by symmetry).

    ``rel_err`` bounds the relative error of every weight.
    """
    key = (float(h), int(N))
    if key in K._weights_cache:
        return K._weights_cache[key]
    if K.n == 1:
        d = np.arange(N) * h
        hi = K.primitive(d + 0.5 * h)
        lo = np.where(d > 0, K.primitive(np.maximum(d - 0.5 * h, 0.0)), -hi)
        W = hi - lo
        rel = 1e-12
    else:
        near = min(3, N)
        W = _gauss_far(K, h, N, 12)
        coarse = _gauss_far(K, h, N, 8)
        far_mask = np.ones((N, N), dtype=bool)
        far_mask[:near, :near] = False
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = float(np.max(np.where(far_mask & (W > 0), np.abs(W - coarse) / W, 0.0), initial=0.0))
        for i in range(near):
            for j in range(i + 1):
                v = _rect_integral(K, (i - 0.5) * h, (i + 0.5) * h, (j - 0.5) * h, (j + 0.5) * h)
                W[i, j] = W[j, i] = v
        rel = max(rel, 1e-11)
    K._weights_cache[key] = (W, rel)
    return W, rel


def _full_weights(W: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.concatenate([W[:0:-1], W])
    top = np.concatenate([W[:0:-1, :], W], axis=0)
    return np.concatenate([top[:, :0:-1], top], axis=1)


def _convolve(Wf: np.ndarray, g: np.ndarray) -> np.ndarray:
    N = g.shape[0]
    if g.ndim == 1:
        return np.convolve(g, Wf)[N - 1 : 2 * N - 1]
    full = signal.fftconvolve(g, Wf, mode="full")
    return full[N - 1 : 2 * N - 1, N - 1 : 2 * N - 1]


def apply_commutator(K: Kernel, b: Optional[GridFunction], m: int, f: GridFunction, return_slack: bool = False):
    """Order-``m`` commutator ``T^{b,m} f`` at the grid midpoints (``m = 0``: the potential ``T f``).

    With ``return_slack`` also returns a pointwise bound on the discretization
    and rounding error of the computed values.
    """
    if m < 0 or int(m) != m:
        raise DomainError("commutator order must be a nonnegative integer")
    if K.n != f.n:
        raise DomainError("kernel and grid dimensions differ")
    if m > 0:
        if b is None:
            raise DomainError("commutators of order m >= 1 need a symbol b")
        if b.box != f.box or b.values.shape != f.values.shape:
            raise DomainError("symbol and function live on different grids")
    N = f.cells_per_side
    W, rel = cell_weights(K, f.cell_width, N)
    Wf = _full_weights(W, f.n)
    fv = f.values
    out = np.zeros(fv.shape)
    envelope = np.zeros(fv.shape)
    bc = None
    if m > 0:
        bc = b.values - np.mean(b.values)
    absf = np.abs(fv)
    for l in range(m + 1):
        coef = math.comb(m, l) * (-1.0) ** l
        g = fv if l == 0 else fv * bc**l
        conv = _convolve(Wf, g)
        term = conv if m == 0 else coef * bc ** (m - l) * conv
        out = out + term
        if return_slack:
            ga = absf if l == 0 else absf * np.abs(bc) ** l
            env = _convolve(Wf, ga)
            envelope = envelope + math.comb(m, l) * (1.0 if m == 0 else np.abs(bc) ** (m - l)) * np.abs(env)
    result = f.with_values(out)
    if not return_slack:
        return result
    eps_fft = 0.0
    if f.n == 2:
        # FFT rounding is absolute: bounded by the l1 mass of W times the largest input
        ab = np.ones(fv.shape) if bc is None else np.abs(bc)
        mags = sum(math.comb(m, l) * float(np.max(ab ** (m - l))) * float(np.max(absf * ab**l)) for l in range(m + 1))
        eps_fft = 1e-13 * float(np.sum(np.abs(Wf))) * mags
    slack = (rel + 1e-13 * (m + 1)) * envelope + eps_fft
    return result, slack


def apply_potential(K: Kernel, f: GridFunction) -> GridFunction:
    """``T f = K * f``; the ``m = 0`` commutator."""
    return apply_commutator(K, None, 0, f)


def kernel_from_config(spec: dict, n: int) -> Kernel:
    from .exceptions import ConfigError

    kind = spec.get("kind")
    try:
        if kind == "fractional":
            return FractionalKernel(spec["alpha"], n)
        if kind == "bessel":
            return BesselKernel(spec["beta"], spec["lambda"], n)
        if kind == "annulus_constant":
            return AnnulusConstantKernel(spec["alpha"], n)
        if kind == "tabulated":
            if "path" in spec:
                return TabulatedKernel.from_csv(spec["path"], n)
            return TabulatedKernel(spec["radii"], spec["values"], n)
    except KeyError as exc:
        raise ConfigError(f"kernel of kind {kind!r} is missing parameter {exc.args[0]!r}") from exc
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown kernel kind {kind!r}")
