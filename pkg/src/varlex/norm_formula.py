"""Two-sided cube-norm formula in L^p(log L)^q and the lemmas behind it."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import CubeLattice, DyadicCube
from .exceptions import DomainError
from .exponents import ExponentField, Field, conjugate
from .gphi import GPhiFunction
from .spaces import _subcell_points, indicator_norm

__all__ = ["FormulaTable", "sample_cubes", "verify_norm_formula", "LemmaChainReport", "verify_lemma_chain"]


def sample_cubes(lattice: CubeLattice, per_level: int = 8) -> list[DyadicCube]:
    """Up to ``per_level`` cubes per lattice level, evenly spread over the index range (corners included)."""
    out = []
    for level in lattice.levels:
        if level <= 0:
            out.extend(lattice.level_cubes(level))
            continue
        M = 1 << level
        total = M**lattice.n
        picks = np.unique(np.round(np.linspace(0, total - 1, min(per_level, total))).astype(np.int64))
        side = lattice.side(level)
        for flat in picks:
            idx = tuple(int(v) for v in np.unravel_index(int(flat), (M,) * lattice.n))
            lo = tuple(lattice.box.lo[d] + idx[d] * side for d in range(lattice.n))
            out.append(DyadicCube(lo=lo, side=side, level=level, index=idx))
    return out


def _cube_average(func, Q: DyadicCube, box, per_side: Optional[int] = None) -> float:
    per_side = per_side or (32 if box.n == 1 else 8)
    pts, _ = _subcell_points(Q, box, per_side)
    return float(np.mean(func(pts)))


_TABLE_COLUMNS = ("cube", "level", "measure", "measured", "predicted", "ratio")


@dataclass
class FormulaTable:
    """Rows of measured ``||chi_Q||``, predicted ``|Q|^{(1/p)_Q} log(e+1/|Q|)^{(q/p)_Q}`` and their ratio."""

    cubes: list
    measure: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def ratio(self) -> np.ndarray:
        return self.measured / self.predicted

    @property
    def ratio_range(self) -> tuple[float, float]:
        r = self.ratio
        return float(r.min()), float(r.max())

    @property
    def octaves(self) -> float:
        return float(np.log2(self.measure.max() / self.measure.min()))

    def slope(self) -> float:
        """Least-squares slope of ``log ratio`` against ``log |Q|``."""
        x = np.log(self.measure)
        if np.ptp(x) == 0:
            return 0.0
        return float(np.polyfit(x, np.log(self.ratio), 1)[0])

    def to_csv(self, path=None) -> Optional[str]:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(_TABLE_COLUMNS)
        for Q, m, a, b, r in zip(self.cubes, self.measure, self.measured, self.predicted, self.ratio):
            wr.writerow([Q.label(), Q.level] + [format(float(v), ".17g") for v in (m, a, b, r)])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)
        return None

    def summary(self) -> dict:
        lo, hi = self.ratio_range
        return {"cubes": len(self.cubes), "octaves": self.octaves, "ratio_min": lo, "ratio_max": hi,
                "slope": self.slope(), **self.params}


def _check_formula_exponents(p: Field, q: Optional[Field]):
    if p.minus < 1 or not math.isfinite(p.plus):
        raise DomainError("needs 1 <= p^- <= p^+ < infinity")
    if q is not None and q.minus < 0:
        raise DomainError("q must be nonnegative")


def verify_norm_formula(p: Field, q: Optional[Field], lattice: CubeLattice, tol: float = 1e-10,
                        per_level: int = 8) -> FormulaTable:
    """Measured indicator norms under ``t^p(x) log(e+t)^q(x)`` against the cube formula.

    ``q = None`` (or identically 0) is the plain variable Lebesgue norm and
    goes through exactly the code path of :func:`spaces.indicator_norm`.
    """
    _check_formula_exponents(p, q)
    phi = GPhiFunction(p, q)
    box = lattice.box
    cubes = sample_cubes(lattice, per_level)
    inv_p = lambda x: 1.0 / p(x)
    q_over_p = (lambda x: q(x) / p(x)) if q is not None else None
    meas, pred, measure = [], [], []
    for Q in cubes:
        mQ = Q.intersection_measure(box)
        a = _cube_average(inv_p, Q, box)
        b = 0.0 if q_over_p is None else _cube_average(q_over_p, Q, box)
        measure.append(mQ)
        meas.append(indicator_norm(phi, Q, tol=tol).value)
        pred.append(mQ**a * math.log(math.e + 1.0 / mQ) ** b)
    params = {"p": p.describe(), "q": None if q is None else q.describe()}
    return FormulaTable(cubes, np.asarray(measure), np.asarray(meas), np.asarray(pred), params)


@dataclass
class LemmaChainReport:
    """Per-item maxima over the sampled cubes; an item passes when finite and below its frozen constant."""

    maxima: dict
    constants: dict
    worst: dict

    @property
    def passed(self) -> bool:
        return all(self.item_passed(k) for k in self.maxima)

    def item_passed(self, item: str) -> bool:
        v = self.maxima[item]
        c = self.constants.get(item, math.inf)
        return bool(math.isfinite(v) and v <= c)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "items": {k: {"max": self.maxima[k], "constant": self.constants.get(k), "worst_cube": self.worst[k],
                          "pass": self.item_passed(k)} for k in self.maxima},
        }


def verify_lemma_chain(p: ExponentField, q: Optional[Field], lattice: CubeLattice, constants: Optional[dict] = None,
                       per_level: int = 8) -> LemmaChainReport:
    """Items on every sampled cube, with ``t = 1/|Q|`` and ``L = log(e + 1/|Q|)``:

    (a) ``L^(q^+_Q - q^-_Q)``;
    (b) ``phi^-1_{1/(1/p)_Q, (q/p)_Q/(1/p)_Q}(t) / avg_Q phi^-1_{p(x),q(x)}(t)``;
    (c) ``t / (avg_Q phi^-1_{p,q}(t) * avg_Q log(e+t)^q(x) phi^-1_{p',q}(t))``;
    (d) ``avg_Q |Q|^(1/p(x)) / ||chi_Q||_p``.
    """
    if p.minus <= 1:
        raise DomainError("the lemma chain needs 1 < p^-")
    _check_formula_exponents(p, q)
    box = lattice.box
    per_side = 32 if box.n == 1 else 8
    pc = conjugate(p)
    phi = GPhiFunction(p, q)
    phic = GPhiFunction(pc, q)
    cubes = sample_cubes(lattice, per_level)
    vals = {k: [] for k in "abcd"}
    for Q in cubes:
        mQ = Q.intersection_measure(box)
        t = 1.0 / mQ
        L = math.log(math.e + t)
        pts, _ = _subcell_points(Q, box, per_side)
        pv = p(pts)
        qv = np.zeros(len(pts)) if q is None else q(pts)
        if q is None:
            vals["a"].append(1.0)
        else:
            qlo, qhi = q.extremes(Q)
            vals["a"].append(L ** (qhi - qlo))
        inv_avg = float(np.mean(1.0 / pv))
        qp_avg = float(np.mean(qv / pv))
        tt = np.full(len(pts), t)
        left = GPhiFunction.constant(box, 1.0 / inv_avg, qp_avg / inv_avg).bind(pts[:1]).inverse(tt[:1])[0]
        right = float(np.mean(phi.bind(pts).inverse(tt)))
        vals["b"].append(left / right)
        conj_avg = float(np.mean(L**qv * phic.bind(pts).inverse(tt)))
        vals["c"].append(t / (right * conj_avg))
        vals["d"].append(float(np.mean(mQ ** (1.0 / pv))) / indicator_norm(p, Q).value)
    maxima, worst = {}, {}
    for k, v in vals.items():
        i = int(np.argmax(v))
        maxima[k] = float(v[i])
        worst[k] = cubes[i].label()
    return LemmaChainReport(maxima, dict(constants or {}), worst)
