"""Variable exponents p(.) on a box: extremes, conjugates, combinations, regularity.

A :class:`Field` is any finite real function on a box; an :class:`ExponentField`
additionally satisfies ``1 <= p^- <= p^+ < inf``.  Fields are immutable and
evaluate on arrays of points of shape ``(..., n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .domain import Box, Cube, GridFunction, _overlap_weights
from .exceptions import DomainError

__all__ = [
    "Field",
    "ExponentField",
    "RegularityReport",
    "extremes",
    "conjugate",
    "combine",
    "regularity",
    "delta_exponent",
    "field_from_config",
    "exponent_from_config",
]

_SAMPLES_1D = 1025
_SAMPLES_2D = 129


def _as_points(points, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if n == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    if pts.shape[-1] != n:
        raise DomainError(f"points must have trailing dimension {n}, got shape {pts.shape}")
    return pts


def _region_bounds(region, box: Box):
    if region is None:
        return box.lo, box.hi
    if isinstance(region, Box):
        lo, hi = region.lo, region.hi
    else:
        lo, hi = np.asarray(region.lo, dtype=float), np.asarray(region.hi, dtype=float)
    tol = 1e-12 * box.side
    if np.any(lo < box.lo - tol) or np.any(hi > box.hi + tol):
        raise DomainError("region is not contained in the exponent's box")
    return lo, hi


class Field:
    """Finite real-valued field on a box."""

    def __init__(self, box: Box, kind: str, params: dict, func: Callable, special_points=(), table=None,
                 at_infinity: Optional[float] = None):
        self.box = box
        self.kind = kind
        self.params = dict(params)
        self._func = func
        self._special = [np.asarray(c, dtype=float) for c in special_points]
        self._table = None if table is None else np.array(table, dtype=float)
        if self._table is not None:
            self._table.setflags(write=False)
        self.at_infinity = at_infinity
        lo, hi = self._sampled_extremes(None)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise DomainError(f"{kind} field is not finite on the box")
        self._minus, self._plus = lo, hi

    # -- construction -------------------------------------------------------

    @classmethod
    def constant(cls, box: Box, value: float):
        v = float(value)
        return cls(box, "constant", {"value": v}, lambda x: np.full(x.shape[:-1], v), at_infinity=v)

    @classmethod
    def affine(cls, box: Box, slope, intercept: float, lo: float, hi: float):
        """``clip(intercept + slope . x, lo, hi)``; a scalar slope acts on the first coordinate."""
        if not lo <= hi:
            raise DomainError("affine clamp requires lo <= hi")
        s = np.atleast_1d(np.asarray(slope, dtype=float))
        if s.size == 1:
            s = np.concatenate([s, np.zeros(box.n - 1)])
        if s.size != box.n:
            raise DomainError("slope length must match the dimension")
        b, l, h = float(intercept), float(lo), float(hi)

        def f(x):
            return np.clip(b + x @ s, l, h)

        return cls(box, "affine", {"slope": s.tolist(), "intercept": b, "lo": l, "hi": h}, f)

    @classmethod
    def log_smooth(cls, box: Box, p_inf: float, amplitude: float, center=None):
        """``1/p(x) = 1/p_inf + amplitude / log(e + 1/|x - center|)``.

        The value at ``center`` is ``p_inf``; far from it ``1/p`` tends to
        ``1/p_inf + amplitude``.
        """
        c = np.asarray(box.center if center is None else np.atleast_1d(center), dtype=float)
        pinf, a = float(p_inf), float(amplitude)

        def f(x):
            r = np.linalg.norm(x - c, axis=-1)
            with np.errstate(divide="ignore"):
                g = 1.0 / np.log(math.e + 1.0 / r)
            inv = 1.0 / pinf + a * g
            if np.any(inv <= 0):
                raise DomainError("log-smooth generator produces a non-positive 1/p")
            return 1.0 / inv

        lim = 1.0 / pinf + a
        at_inf = 1.0 / lim if lim > 0 else None
        return cls(box, "log_smooth", {"p_inf": pinf, "amplitude": a, "center": c.tolist()}, f,
                   special_points=[c], at_infinity=at_inf)

    @classmethod
    def loglog_smooth(cls, box: Box, base: float, amplitude: float, center=None):
        """``base + amplitude / log(e + log(e + 1/|x - center|))``, a log-log-Hölder field."""
        c = np.asarray(box.center if center is None else np.atleast_1d(center), dtype=float)
        b, a = float(base), float(amplitude)

        def f(x):
            r = np.linalg.norm(x - c, axis=-1)
            with np.errstate(divide="ignore"):
                inner = np.log(math.e + 1.0 / r)
            return b + a / np.log(math.e + inner)

        return cls(box, "loglog_smooth", {"base": b, "amplitude": a, "center": c.tolist()}, f,
                   special_points=[c], at_infinity=b + a)

    @classmethod
    def tabulated(cls, box: Box, values):
        """Piecewise constant on the cells of a uniform grid (values shaped ``(N,)*n``)."""
        v = np.asarray(values, dtype=float)
        if v.ndim != box.n or len(set(v.shape)) != 1:
            raise DomainError(f"tabulated values must have shape (N,)*{box.n}")
        N = v.shape[0]
        h = box.side / N
        lo = box.lo

        def f(x):
            idx = np.clip(np.floor((x - lo) / h).astype(int), 0, N - 1)
            return v[tuple(idx[..., d] for d in range(box.n))]

        return cls(box, "tabulated", {"cells_per_side": N}, f, table=v)

    @classmethod
    def from_callable(cls, box: Box, func: Callable, kind: str = "derived", params=None, special_points=(),
                      at_infinity=None):
        return cls(box, kind, params or {}, func, special_points=special_points, at_infinity=at_infinity)

    def _derive(self, func: Callable, kind: str, params: dict, others=(), at_infinity=None) -> "Field":
        special = list(self._special)
        for o in others:
            special.extend(o._special)
        out = Field(self.box, kind, params, func, special_points=special, at_infinity=at_infinity)
        parents = (self, *others)
        sizes = [f._cell_count() for f in parents]
        if all(s is not None for s in sizes) and any(s > 0 for s in sizes):
            # piecewise-constant parents: per-cell values give exact extremes
            N = max(sizes)
            pts = GridFunction.constant(self.box, N).midpoints()
            out._cells = (N, np.asarray(func(pts), dtype=float))
            out._minus, out._plus = out._sampled_extremes(None)
        return out

    def _cell_count(self) -> Optional[int]:
        """Cells per side if piecewise constant (0 for constants), else None."""
        if self._table is not None:
            return self._table.shape[0]
        cells = getattr(self, "_cells", None)
        if cells is not None:
            return cells[0]
        return 0 if self.kind == "constant" else None

    # -- evaluation ---------------------------------------------------------

    @property
    def n(self) -> int:
        return self.box.n

    def __call__(self, points) -> np.ndarray:
        pts = _as_points(points, self.n)
        return np.asarray(self._func(pts), dtype=float)

    def on_grid(self, cells_per_side: int) -> GridFunction:
        return GridFunction.sample(self.box, cells_per_side, self._func)

    def sample_points(self, region=None) -> np.ndarray:
        lo, hi = _region_bounds(region, self.box)
        m = _SAMPLES_1D if self.n == 1 else _SAMPLES_2D
        axes = [np.linspace(lo[d], hi[d], m) for d in range(self.n)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        extra = [c for c in self._special if np.all(c >= lo) and np.all(c <= hi)]
        if extra:
            grid = np.vstack([grid, np.asarray(extra)])
        return grid

    def _sampled_extremes(self, region):
        lo, hi = _region_bounds(region, self.box)
        cells = getattr(self, "_cells", None)
        if self._table is not None or cells is not None:
            N, vals = (self._table.shape[0], self._table) if cells is None else cells
            w = _overlap_weights(self.box, N, (lo, hi))
            sel = vals[w > 0] if np.any(w > 0) else vals[_nearest_cell(self.box, N, lo)]
            sel = np.atleast_1d(sel)
            return float(sel.min()), float(sel.max())
        v = self(self.sample_points(region))
        return float(v.min()), float(v.max())

    def extremes(self, region=None) -> tuple[float, float]:
        """(inf, sup) over the sample points of ``region`` (the whole box by default)."""
        if region is None:
            return self._minus, self._plus
        return self._sampled_extremes(region)

    @property
    def minus(self) -> float:
        return self._minus

    @property
    def plus(self) -> float:
        return self._plus

    def reciprocal(self) -> "Field":
        ai = None if not self.at_infinity else 1.0 / self.at_infinity
        return self._derive(lambda x: 1.0 / self._func(x), "reciprocal", {"of": self.kind}, at_infinity=ai)

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params, "minus": self._minus, "plus": self._plus}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(kind={self.kind!r}, range=[{self._minus:.6g}, {self._plus:.6g}])"


def _nearest_cell(box: Box, N: int, point):
    h = box.side / N
    idx = np.clip(np.floor((np.asarray(point) - box.lo) / h).astype(int), 0, N - 1)
    return tuple(int(i) for i in idx)


class ExponentField(Field):
    """Variable exponent with ``1 <= p^- <= p^+ < inf``."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self._minus < 1.0 - 1e-12:
            raise DomainError(f"exponent must be >= 1, got p^- = {self._minus}")

    @property
    def p_minus(self) -> float:
        return self._minus

    @property
    def p_plus(self) -> float:
        return self._plus

    @classmethod
    def promote(cls, field: Field) -> "ExponentField":
        """Reinterpret a field with values >= 1 as an exponent."""
        if isinstance(field, ExponentField):
            return field
        out = cls.__new__(cls)
        out.__dict__.update(field.__dict__)
        if out._minus < 1.0 - 1e-12:
            raise DomainError(f"exponent must be >= 1, got p^- = {out._minus}")
        return out


def extremes(p: Field, region=None) -> tuple[float, float]:
    return p.extremes(region)


def conjugate(p: ExponentField) -> ExponentField:
    """Pointwise ``p' = p/(p-1)`` with analytically swapped extremes."""
    if p.minus <= 1.0:
        raise DomainError("conjugate requires p^- > 1 (p' would be unbounded)")
    f = p._func
    ai = None if p.at_infinity is None or p.at_infinity <= 1 else p.at_infinity / (p.at_infinity - 1.0)
    q = p._derive(lambda x: (lambda v: v / (v - 1.0))(f(x)), "conjugate", {"of": p.kind}, at_infinity=ai)
    q = ExponentField.promote(q)
    q._minus = p.plus / (p.plus - 1.0)
    q._plus = p.minus / (p.minus - 1.0)
    return q


def combine(p: Field, q: Field, mode: str, c: Optional[float] = None) -> Field:
    """Pointwise combination of exponents.

    ``difference``: 1/beta = 1/p - 1/q (requires p < q pointwise);
    ``sum``: 1/alpha = 1/p + 1/q; ``scale``: c * p; ``product``: p * q.
    """
    fp = p._func
    if mode == "scale":
        if c is None:
            raise DomainError("scale mode needs a factor c")
        if c < 1.0 / p.minus:
            raise DomainError("scale requires c >= 1/p^-")
        ai = None if p.at_infinity is None else c * p.at_infinity
        out = p._derive(lambda x: c * fp(x), "scale", {"c": float(c)}, at_infinity=ai)
    else:
        if q is None:
            raise DomainError(f"{mode} mode needs a second field")
        fq = q._func
        both = p.at_infinity is not None and q.at_infinity is not None
        if mode == "difference":
            pts = np.vstack([p.sample_points(), q.sample_points()])
            gap = 1.0 / fp(pts) - 1.0 / fq(pts)
            if np.any(gap <= 1e-14):
                bad = pts[np.argmin(gap)]
                raise DomainError(f"difference mode requires p < q pointwise; fails near x = {bad.tolist()}")
            ai = 1.0 / (1.0 / p.at_infinity - 1.0 / q.at_infinity) if both and q.at_infinity > p.at_infinity else None
            out = p._derive(lambda x: 1.0 / (1.0 / fp(x) - 1.0 / fq(x)), "difference", {}, (q,), ai)
        elif mode == "sum":
            ai = 1.0 / (1.0 / p.at_infinity + 1.0 / q.at_infinity) if both else None
            out = p._derive(lambda x: 1.0 / (1.0 / fp(x) + 1.0 / fq(x)), "sum", {}, (q,), ai)
        elif mode == "product":
            ai = p.at_infinity * q.at_infinity if both else None
            out = p._derive(lambda x: fp(x) * fq(x), "product", {}, (q,), ai)
        else:
            raise DomainError(f"unknown combine mode {mode!r}")
    return ExponentField.promote(out) if out.minus >= 1.0 - 1e-12 else out


@dataclass(frozen=True)
class RegularityReport:
    local_logholder_constant: float
    at_infinity_constant: float
    loglog_constant: float
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "local_logholder_constant": self.local_logholder_constant,
            "at_infinity_constant": self.at_infinity_constant,
            "loglog_constant": self.loglog_constant,
            "sample_count": self.sample_count,
        }


def _anchor_points(p: Field) -> np.ndarray:
    box = p.box
    corners = np.array(np.meshgrid(*[[box.lo[d], box.hi[d]] for d in range(box.n)], indexing="ij")).reshape(box.n, -1).T
    pts = [np.asarray(box.center)[None, :], corners]
    pts += [c[None, :] for c in p._special]
    return np.vstack(pts)


def regularity(p: Field, pair_budget: int = 20000, seed: int = 0) -> RegularityReport:
    """Sampled log-Hölder and log-log-Hölder constants (lower bounds for the true sups).

    The log-Hölder checks use ``1/p``; the log-log check uses ``p`` itself.
    """
    if pair_budget < 2:
        raise DomainError("pair_budget must be at least 2")
    box = p.box
    rng = np.random.default_rng(seed)
    anchors = _anchor_points(p)
    # geometric offsets from each anchor probe the local modulus near singular points
    k = max(1, min(60, pair_budget // (4 * len(anchors))))
    radii = box.side * np.geomspace(1e-9, 1.0, k)
    dirs = rng.normal(size=(len(anchors), k, box.n))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    X = np.repeat(anchors[:, None, :], k, axis=1)
    Y = np.clip(X + radii[None, :, None] * dirs, box.lo, box.hi)
    X, Y = X.reshape(-1, box.n), Y.reshape(-1, box.n)
    m = max(pair_budget - len(X), 1)
    Xr = rng.uniform(box.lo, box.hi, size=(m, box.n))
    Yr = rng.uniform(box.lo, box.hi, size=(m, box.n))
    X = np.vstack([X, Xr])
    Y = np.vstack([Y, Yr])
    d = np.linalg.norm(X - Y, axis=-1)
    keep = d > 0
    X, Y, d = X[keep], Y[keep], d[keep]
    px, py = p(X), p(Y)
    ax, ay = 1.0 / px, 1.0 / py
    local = float(np.max(np.abs(ax - ay) * np.log(math.e + 1.0 / d), initial=0.0))
    loglog = float(np.max(np.abs(px - py) * np.log(math.e + np.log(math.e + 1.0 / d)), initial=0.0))
    if p.at_infinity is not None:
        a_inf = 1.0 / p.at_infinity
    else:
        a_inf = 0.5 * (1.0 / p.minus + 1.0 / p.plus)
    pts = np.vstack([X, Y])
    at_inf = float(np.max(np.abs(1.0 / p(pts) - a_inf) * np.log(math.e + np.linalg.norm(pts, axis=-1)), initial=0.0))
    return RegularityReport(local, at_inf, loglog, int(len(X)))


def delta_exponent(gamma: float, r: ExponentField, n: Optional[int] = None) -> Field:
    """``delta(.) = n (1/gamma - 1/r(.))`` after validating the admissible range of r."""
    n = r.n if n is None else n
    g = float(gamma)
    if not g > 1:
        raise DomainError(f"delta exponent requires 1 < gamma (got gamma = {g})")
    if r.minus < g - 1e-12:
        raise DomainError(f"delta exponent requires gamma <= r^- (gamma = {g}, r^- = {r.minus})")
    upper = math.inf if n <= g else n * g / (n - g)
    if not r.plus < upper:
        raise DomainError(f"delta exponent requires r^+ < n*gamma/(n-gamma)^+ = {upper} (r^+ = {r.plus})")
    if r.at_infinity is not None and r.at_infinity > r.minus + 1e-12:
        raise DomainError(f"delta exponent requires r_inf <= r(.) (r_inf = {r.at_infinity}, r^- = {r.minus})")
    fr = r._func
    ai = None if r.at_infinity is None else n * (1.0 / g - 1.0 / r.at_infinity)
    out = r._derive(lambda x: np.maximum(n * (1.0 / g - 1.0 / fr(x)), 0.0), "delta", {"gamma": g, "n": n},
                    at_infinity=ai)
    return out


def field_from_config(spec: dict, box: Box) -> Field:
    """Build a field from a config table with a ``kind`` key (see the harness config grammar)."""
    from .exceptions import ConfigError

    kind = spec.get("kind")
    try:
        if kind == "constant":
            return Field.constant(box, spec["value"])
        if kind == "affine":
            return Field.affine(box, spec["slope"], spec["intercept"], spec["lo"], spec["hi"])
        if kind == "log_smooth":
            return Field.log_smooth(box, spec["p_inf"], spec["amplitude"], spec.get("center"))
        if kind == "loglog_smooth":
            return Field.loglog_smooth(box, spec["base"], spec["amplitude"], spec.get("center"))
        if kind == "tabulated":
            if "values" in spec:
                vals = np.asarray(spec["values"], dtype=float)
            else:
                vals = np.loadtxt(spec["path"], delimiter=",", ndmin=box.n)
            return Field.tabulated(box, vals)
    except KeyError as exc:
        raise ConfigError(f"exponent of kind {kind!r} is missing parameter {exc.args[0]!r}") from exc
    raise ConfigError(f"unknown exponent kind {kind!r}")


def exponent_from_config(spec: dict, box: Box) -> ExponentField:
    from .exceptions import ConfigError

    f = field_from_config(spec, box)
    try:
        return ExponentField.promote(f)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
