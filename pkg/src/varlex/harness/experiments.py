"""Experiment orchestration: theorem runs, the invariant suite and calibration."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from ..conditions import (FPReport, WeightPair, check_condition_F, fefferman_phong_thm11, fefferman_phong_thm12,
                          power_weight)
from ..domain import Box, CubeLattice, DyadicCube, GridFunction, random_indicator_sum
from ..exceptions import ConfigError, DomainError
from ..exponents import ExponentField, Field, combine, conjugate
from ..gphi import GPhiFunction, build_example_triple, young_defect
from ..maximal import MaximalSpec, boundedness_probe, maximal
from ..norm_formula import sample_cubes, verify_lemma_chain, verify_norm_formula
from ..operators import apply_commutator, check_class_D
from ..spaces import (doubling_ratio, duality_lower_bound, exponent_quotient_ratio, holder_ratio, indicator_norms,
                      luxemburg_norm, modular)
from ..sparse import (build_stopping_family, dyadic_majorant, local_sum_bound_check, overlap_sum_ratio,
                      proof_exponents, random_disjoint_family, stopping_constants, stopping_functional)
from ..symbols import (lipschitz_seminorm, nested_average_gap, oscillation_norm_ratio, power_symbol,
                       seminorm_equivalence_check, t_infinity, variable_lipschitz_pointwise_check)
from ..spaces import disjoint_sum_ratio
from .config import ExperimentConfig
from .report import CheckRow, RunReport

__all__ = [
    "build_weights",
    "build_symbol",
    "build_triples",
    "verification_exponents",
    "certify",
    "refinement_growth",
    "random_source",
    "verify_theorem",
    "run_invariant_suite",
    "SUITE_CHECKS",
    "calibrate",
]


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def build_weights(cfg: ExperimentConfig) -> WeightPair:
    spec = cfg.weights
    N = cfg.cells_per_side
    if spec["kind"] == "unit":
        return WeightPair.unit(cfg.box, N)
    center = spec.get("center")
    try:
        v = power_weight(cfg.box, N, float(spec.get("gamma_v", 0.0)), center)
        w = power_weight(cfg.box, N, float(spec.get("gamma_w", 0.0)), center)
    except DomainError as exc:
        raise ConfigError(f"weights: {exc}") from exc
    return WeightPair(v, w)


def _default_center(box: Box) -> np.ndarray:
    # off every dyadic grid point
    return np.asarray(box.lo) + box.side * (0.5 - 1.0 / 3.0**5)


def build_symbol(cfg: ExperimentConfig) -> Optional[GridFunction]:
    """The symbol ``b`` on the config grid, ``None`` when ``m = 0`` and no symbol is given."""
    spec = cfg.symbol
    box, N = cfg.box, cfg.cells_per_side
    kind = spec.get("functional", "one")
    if "centers" not in spec and cfg.m == 0 and "powers" not in spec:
        return None
    if kind == "power":
        top = float(spec["delta"])
    elif kind == "variable":
        top = min(cfg.delta_field().plus, 1.0)
    else:
        top = None
    centers = spec.get("centers", [list(_default_center(box))])
    if top is None and "powers" not in spec:
        # logarithm: the model unbounded BMO symbol
        c = np.atleast_2d(np.asarray(centers, dtype=float))[0]
        return GridFunction.sample(box, N, lambda x: np.log(np.linalg.norm(x - c, axis=-1)))
    powers = spec.get("powers", ["delta+"] * len(centers))
    powers = [top if e == "delta+" else float(e) for e in powers]
    coefs = spec.get("coefficients", [1.0] * len(centers))
    try:
        return power_symbol(box, N, centers, powers, coefs)
    except DomainError as exc:
        raise ConfigError(f"symbol: {exc}") from exc


def build_triples(cfg: ExperimentConfig):
    """``(ABD, EHJ)`` for the configured example."""
    ex = int(cfg.triples["example"])
    mu = nu = None
    if ex == 2:
        mu = ExponentField.promote(_table_field(cfg, cfg.triples["mu"]))
        nu = _table_field(cfg, cfg.triples["nu"]) if "nu" in cfg.triples else None
    try:
        return build_example_triple(ex, cfg.p, float(cfg.theorem["sigma"]), mu, nu,
                                    float(cfg.theorem.get("eps", 0.1)) if ex == 2 else None)
    except DomainError as exc:
        raise ConfigError(f"violated example-triple hypothesis: {exc}") from exc


def _table_field(cfg: ExperimentConfig, spec: dict) -> Field:
    from ..exponents import field_from_config

    return field_from_config(spec, cfg.box)


def verification_exponents(cfg: ExperimentConfig):
    """Proof-internal exponents ``s, l, omega, tau`` and constants ``mu, nu``."""
    ver = cfg.verification
    try:
        return proof_exponents(cfg.p, cfg.q, float(cfg.theorem["R"]), float(cfg.theorem["S"]), ver.mu, ver.nu)
    except DomainError as exc:
        raise ConfigError(f"violated proof-exponent admissibility: {exc}") from exc


def certify(cfg: ExperimentConfig, which: Optional[str] = None, lattice: Optional[CubeLattice] = None,
            weights: Optional[WeightPair] = None, m: Optional[int] = None) -> FPReport:
    which = str(which or cfg.theorem["which"])
    lattice = lattice or cfg.lattice
    weights = weights or build_weights(cfg)
    m = cfg.m if m is None else m
    tol = float(cfg.tolerances["luxemburg"])
    try:
        if which == "1.1":
            return fefferman_phong_thm11(cfg.p, cfg.q, float(cfg.theorem["R"]), float(cfg.theorem["S"]),
                                         cfg.functional(), m, cfg.kernel, weights, lattice, tol)
        if which == "1.2":
            abd, ehj = build_triples(cfg)
            return fefferman_phong_thm12(cfg.p, cfg.q, cfg.delta_field(), m, cfg.kernel, abd.A, ehj.A, weights,
                                         lattice, tol)
    except DomainError as exc:
        raise ConfigError(f"violated testing-condition hypothesis: {exc}") from exc
    raise ConfigError(f"unknown theorem {which!r}; expected 1.1 or 1.2")


def refinement_growth(report: FPReport) -> float:
    """``kappa`` over ``kappa`` without the finest lattice level (1 when only one level)."""
    lev = report.table["level"]
    vals = report.table["functional"]
    coarse = lev < lev.max()
    if not np.any(coarse):
        return 1.0
    k0 = float(np.max(vals[coarse]))
    return report.kappa / k0 if k0 > 0 else math.inf


def random_source(cfg: ExperimentConfig, rng: np.random.Generator, v: Optional[GridFunction] = None) -> GridFunction:
    """Indicator sum plus bump, scaled to ``||f v||_p = 1``."""
    f = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
    fv = f if v is None else f * v
    s = luxemburg_norm(GPhiFunction.power(cfg.p), fv, tol=float(cfg.tolerances["luxemburg"])).value
    return f * (1.0 / s)


def _spawn(seed: int, count: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(count)]


def _pool_map(func: Callable, items: list, jobs: int) -> list:
    """Ordered map; ``jobs > 1`` runs on a thread pool."""
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, items))


# --------------------------------------------------------------------------
# theorem runs
# --------------------------------------------------------------------------

_THEOREM_ANCHOR = {
    "1.1": "weighted commutator bound under the power-average testing condition",
    "1.2": "weighted commutator bound under the Phi-triple testing condition",
}


def verify_theorem(which: str, cfg: ExperimentConfig, seed: Optional[int] = None, jobs: int = 1,
                   trials: Optional[int] = None) -> RunReport:
    """Max over random ``f >= 0`` of ``||(T^{b,m} f) w||_q / (kappa ||b||^m ||f v||_p)``.

    Raises ``ConfigError`` before any trial when ``kappa`` is infinite, grows
    under refinement, or the kernel fails the class-D test.
    """
    t0 = time.perf_counter()
    which = str(which)
    if which not in _THEOREM_ANCHOR:
        raise ConfigError(f"unknown theorem {which!r}; expected 1.1 or 1.2")
    seed = cfg.seed if seed is None else int(seed)
    trials = int(trials or cfg.trials["verify"])
    tol = float(cfg.tolerances["luxemburg"])
    cd = check_class_D(cfg.kernel, cfg.kernel_delta, cfg.kernel_eps)
    if not cd.pass_:
        raise ConfigError("violated kernel class D: annulus sup not controlled by the dilated annulus average")
    fp = certify(cfg, which)
    kappa = fp.kappa
    if not math.isfinite(kappa) or kappa <= 0:
        raise ConfigError(f"violated finite testing constant: kappa = {kappa} (worst cube {fp.worst_cube.label()})")
    growth = refinement_growth(fp)
    rtol = float(cfg.theorem["refinement_tol"])
    if growth > 1.0 + rtol:
        raise ConfigError(f"violated uniform cube bound: kappa grows by {growth:.6g} when the finest level is added "
                          f"(allowed 1 + {rtol})")
    weights = build_weights(cfg)
    m = cfg.m
    b = build_symbol(cfg) if m > 0 else None
    if m > 0:
        a = cfg.functional()
        bnorm = lipschitz_seminorm(b, a, float(cfg.symbol["rho"]), cfg.lattice).seminorm
    else:
        bnorm = 1.0
    scale = kappa * bnorm**m
    P = GPhiFunction.power(cfg.p)
    Qphi = GPhiFunction.power(cfg.q)

    def trial(rng):
        f = random_source(cfg, rng, weights.v)
        src = luxemburg_norm(P, f * weights.v, tol=tol).value
        Tf = apply_commutator(cfg.kernel, b, m, f)
        num = luxemburg_norm(Qphi, Tf * weights.w, tol=tol).value
        ratio = 0.0 if num == 0 else num / (scale * src)
        return ratio, f

    results = _pool_map(trial, _spawn(seed, trials), jobs)
    ratios = np.array([r for r, _ in results])
    i = int(np.argmax(ratios))
    key = f"verify_bound_{which.replace('.', '')}"
    bound = cfg.constant(key, math.inf)
    rows = [
        CheckRow("kernel_class_D", "class D kernels", True, cd.c_estimate),
        CheckRow("kappa_finite", "uniform cube bound of the testing condition", True, kappa),
        CheckRow("kappa_refinement", "uniform cube bound of the testing condition", True, growth, 1.0 + rtol),
        CheckRow(f"theorem_{which}", _THEOREM_ANCHOR[which], bool(ratios[i] <= bound), float(ratios[i]), bound, key,
                 f"{trials} trials"),
    ]
    wf = results[i][1]
    rep = RunReport(
        command=f"verify {which}",
        config=cfg.name,
        seed=seed,
        checks=rows,
        measured={"b_seminorm": bnorm, "m": m, "trials": trials, "ratio_mean": float(np.mean(ratios)),
                  "refinement_growth": growth},
        kappa={f"thm{which.replace('.', '')}": kappa},
        max_ratio={f"theorem_{which}": float(ratios[i])},
        worst={"trial": i, "f_integral": float(np.sum(wf.values) * wf.cell_measure),
               "f_max": float(np.max(wf.values)), "kappa_cube": fp.worst_cube.label()},
    )
    rep.artifacts["worst_f"] = wf
    rep.artifacts["fp"] = fp
    rep.artifacts["ratios"] = ratios
    rep.runtime = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# invariant suite
# --------------------------------------------------------------------------


def _phi(cfg: ExperimentConfig) -> GPhiFunction:
    return GPhiFunction(cfg.p, cfg.theta)


def _upper(name, anchor, value, bound, key=None, detail=""):
    value = float(value)
    ok = math.isfinite(value) and (bound is None or value <= bound)
    return CheckRow(name, anchor, bool(ok), value, bound, key, detail)


def _frozen(cfg, key):
    return cfg.constant(key, math.inf)


def _suite_cubes(cfg: ExperimentConfig, count: int) -> list:
    cubes = [Q for Q in sample_cubes(cfg.lattice, 8) if Q.level >= 0]
    idx = np.unique(np.round(np.linspace(0, len(cubes) - 1, min(count, len(cubes)))).astype(int))
    return [cubes[i] for i in idx]


def check_closed_form(cfg, rng):
    """Constant exponents: ``||chi_Q||_p = |Q|^(1/p)``."""
    tol = float(cfg.tolerances["luxemburg"])
    cubes = _suite_cubes(cfg, cfg.trials["closed_form_cubes"])
    exps = [1.5, 2.0, 3.0]
    if cfg.p.minus == cfg.p.plus and cfg.p.minus not in exps:
        exps.append(float(cfg.p.minus))
    worst = 0.0
    for e in exps:
        meas = indicator_norms(Field.constant(cfg.box, e), cubes, tol=tol)
        exact = np.array([Q.intersection_measure(cfg.box) ** (1.0 / e) for Q in cubes])
        worst = max(worst, float(np.max(np.abs(meas / exact - 1.0))))
    bound = float(cfg.tolerances["closed_form"])
    return [_upper("closed_form", "constant-exponent indicator norms", worst, bound,
                   detail=f"{len(cubes)} cubes, p in {exps}")]


def check_unit_ball(cfg, rng):
    """``modular(f / ||f||) = 1`` up to the unit-ball tolerance."""
    phi = _phi(cfg)
    tol = float(cfg.tolerances["luxemburg"])
    dev = 0.0
    for _ in range(cfg.trials["unit_ball"]):
        f = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
        lam = luxemburg_norm(phi, f, tol=tol).value
        dev = max(dev, abs(1.0 - modular(phi, f * (1.0 / lam))))
    return [_upper("unit_ball", "Luxemburg norm attains the unit modular", dev, float(cfg.tolerances["unit_ball"]))]


def formula_lattice(cfg) -> CubeLattice:
    """Levels spanning 20 dyadic octaves of cube measure (the formula needs no grid)."""
    return CubeLattice(cfg.box, 0, -(-20 // cfg.box.n))


def check_formula(cfg, rng):
    per_level = 8 if cfg.box.n == 1 else 12
    tab = verify_norm_formula(cfg.p, cfg.theta, formula_lattice(cfg), float(cfg.tolerances["luxemburg"]), per_level)
    lo, hi = tab.ratio_range
    spread = max(hi, 1.0 / lo)
    return [
        _upper("formula_slope", "two-sided cube-norm formula in L^p(log L)^q", abs(tab.slope()),
               float(cfg.tolerances["formula_slope"]), detail=f"{len(tab.cubes)} cubes, {tab.octaves:.4g} octaves"),
        _upper("formula_ratio", "two-sided cube-norm formula in L^p(log L)^q", spread, _frozen(cfg, "C_formula"),
               "C_formula"),
    ]


def check_indicator_product(cfg, rng):
    """``||chi_Q||_p ||chi_Q||_p' / |Q|`` in ``[1/C_p, C_p]`` on every aligned lattice cube."""
    worst = 1.0
    pc = conjugate(cfg.p)
    for level in cfg.lattice.levels:
        if level < 0:
            continue
        cubes = cfg.lattice.level_cubes(level)
        r = indicator_norms(cfg.p, cubes) * indicator_norms(pc, cubes) / cubes[0].intersection_measure(cfg.box)
        worst = max(worst, float(np.max(r)), float(np.max(1.0 / r)))
    return [_upper("indicator_product", "indicator norms of p and p' multiply to |Q|", worst, _frozen(cfg, "C_p"), "C_p")]


def check_doubling_quotient(cfg, rng):
    cubes = _suite_cubes(cfg, cfg.trials["symbol_cubes"])
    d = [doubling_ratio(cfg.p, Q) for Q in cubes]
    d = [v for v in d if v is not None]
    rows = [_upper("doubling", "doubling of indicator norms", max(d) if d else 1.0, _frozen(cfg, "C_doubling"),
                   "C_doubling")]
    pts = np.vstack([cfg.p.sample_points(), cfg.q.sample_points()])
    if np.all(cfg.q(pts) > cfg.p(pts)):
        beta = ExponentField.promote(combine(cfg.p, cfg.q, "difference"))
        r = [exponent_quotient_ratio(cfg.p, cfg.q, beta, Q) for Q in cubes]
        worst = max(max(r), 1.0 / min(r))
        rows.append(_upper("exponent_quotient", "indicator norms factor through 1/beta = 1/p - 1/q", worst,
                           _frozen(cfg, "C_quotient"), "C_quotient"))
    return rows


def _small_grid(cfg) -> int:
    """Grid for checks that evaluate conjugate norms (grid-sup per cell)."""
    return min(cfg.cells_per_side, 128 if cfg.box.n == 1 else 32)


def check_holder(cfg, rng):
    phi = _phi(cfg)
    worst = 0.0
    N = _small_grid(cfg)
    for _ in range(cfg.trials["holder"]):
        f = random_indicator_sum(cfg.box, N, rng)
        g = random_indicator_sum(cfg.box, N, rng)
        worst = max(worst, holder_ratio(phi, f, g))
    return [_upper("holder", "generalized Hoelder inequality with constant 2", worst, 2.0,
                   detail=f"{cfg.trials['holder']} pairs")]


def check_young(cfg, rng):
    phi = _phi(cfg)
    k = cfg.trials["young"]
    x = rng.uniform(cfg.box.lo, cfg.box.hi, size=(k, cfg.box.n))
    v = np.exp(rng.uniform(-6, 6, size=k))
    u = np.exp(rng.uniform(-6, 6, size=k))
    d = young_defect(phi, x, v, u)
    tol = float(cfg.tolerances["young"])
    val = float(np.min(d))
    return [CheckRow("young", "Young inequality for phi and its conjugate", bool(val >= -tol), val, -tol,
                     detail=f"{k} samples, lower bound")]


def check_duality(cfg, rng):
    phi = _phi(cfg)
    lo, hi = math.inf, 0.0
    for _ in range(cfg.trials["duality_functions"]):
        f = random_indicator_sum(cfg.box, _small_grid(cfg), rng)
        r = duality_lower_bound(phi, f, cfg.trials["duality_candidates"], rng) / luxemburg_norm(phi, f).value
        lo, hi = min(lo, r), max(hi, r)
    return [
        CheckRow("duality_lower", "norm conjugate formula", bool(lo >= 0.25), lo, 0.25, detail="lower bound"),
        _upper("duality_upper", "norm conjugate formula", hi, 2.0),
    ]


def check_kernel(cfg, rng):
    cd = check_class_D(cfg.kernel, cfg.kernel_delta, cfg.kernel_eps)
    return [CheckRow("class_D", "class D kernels", cd.pass_, cd.c_estimate, None, None,
                     f"delta={cd.delta}, eps={cd.eps}, k in {list(cd.k_range)}")]


def check_disjoint_sum(cfg, rng):
    """Sums of local Hoelder products over pairwise disjoint cubes."""
    worst = 0.0
    for _ in range(cfg.trials["disjoint"]):
        f = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
        g = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
        fam = random_disjoint_family(cfg.lattice, rng, int(rng.integers(2, 9)), cfg.grid_depth)
        if fam:
            worst = max(worst, disjoint_sum_ratio(cfg.p, f, g, fam))
    return [_upper("disjoint_sum", "norm sums over disjoint cube families", worst, _frozen(cfg, "G_p"), "G_p")]


def _random_root(cfg, rng, max_level: int = 2) -> DyadicCube:
    lev = int(rng.integers(0, min(max_level, cfg.grid_depth) + 1))
    cubes = cfg.lattice.level_cubes(lev) if cfg.lattice.j_min <= lev <= cfg.lattice.j_max else \
        CubeLattice(cfg.box, lev, lev).level_cubes(lev)
    return cubes[int(rng.integers(0, len(cubes)))]


def check_overlap(cfg, rng):
    """Per-depth sums over the 3Q windows of a fixed cube, uniformly in the depth."""
    worst = 0.0
    dmax = 0
    for _ in range(cfg.trials["overlap"]):
        Q0 = _random_root(cfg, rng)
        f = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
        g = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
        for d in range(1, min(6, cfg.grid_depth - Q0.level) + 1):
            worst = max(worst, overlap_sum_ratio(cfg.p, f, g, Q0, d))
            dmax = max(dmax, d)
    return [_upper("overlap_sum", "depth-uniform overlap sums", worst, _frozen(cfg, "C_overlap"), "C_overlap",
                   f"depths 1..{dmax}")]


def check_regularity(cfg, rng):
    """log-log modulus of ``p theta`` and ``theta / p`` against the product-rule bound, on shared pairs."""
    theta = cfg.theta if cfg.theta is not None else Field.loglog_smooth(cfg.box, 1.0, 0.5)
    box = cfg.box
    k = 4000
    X = rng.uniform(box.lo, box.hi, size=(k, box.n))
    r = box.side * np.exp(rng.uniform(math.log(1e-9), 0.0, size=k))
    dirs = rng.normal(size=(k, box.n))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    Y = np.clip(X + r[:, None] * dirs, box.lo, box.hi)
    d = np.linalg.norm(X - Y, axis=-1)
    keep = d > 0
    X, Y, d = X[keep], Y[keep], d[keep]
    L = np.log(math.e + np.log(math.e + 1.0 / d))

    def const(vx, vy):
        return float(np.max(np.abs(vx - vy) * L))

    px, py = cfg.p(X), cfg.p(Y)
    tx, ty = theta(X), theta(Y)
    ip_x, ip_y = 1.0 / px, 1.0 / py
    c_p, c_t, c_ip = const(px, py), const(tx, ty), const(ip_x, ip_y)
    prod = combine(cfg.p, theta, "product")
    quot = combine(theta, cfg.p.reciprocal(), "product")
    b1 = cfg.p.plus * c_t + theta.plus * c_p
    b2 = (1.0 / cfg.p.minus) * c_t + theta.plus * c_ip
    r1 = const(prod(X), prod(Y)) / b1 if b1 > 0 else 0.0
    r2 = const(quot(X), quot(Y)) / b2 if b2 > 0 else 0.0
    bound = 1.0 + 1e-9
    return [
        _upper("loglog_product", "log-log regularity of products p q", r1, bound),
        _upper("loglog_quotient", "log-log regularity of quotients q / p", r2, bound),
    ]


def _random_symbol(cfg, rng) -> GridFunction:
    c = np.asarray(cfg.box.lo) + cfg.box.side * rng.uniform(0.1, 0.9, size=cfg.box.n)
    return power_symbol(cfg.box, cfg.cells_per_side, [c], [float(rng.uniform(0.1, 1.0))],
                        [float(rng.uniform(0.5, 2.0))])


def check_majorant(cfg, rng):
    """``|T^{b,m} f| <= dyadic majorant + quadrature slack`` at every midpoint."""
    worst = -math.inf
    for _ in range(cfg.trials["majorant"]):
        m = int(rng.integers(0, 3))
        b = _random_symbol(cfg, rng) if m > 0 else None
        f = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
        T, slack = apply_commutator(cfg.kernel, b, m, f, return_slack=True)
        M = dyadic_majorant(cfg.kernel, b, m, f)
        excess = (np.abs(T.values) - M.values - slack) / max(float(np.max(M.values)), 1e-300)
        worst = max(worst, float(np.max(excess)))
    return [_upper("majorant", "pointwise sparse domination of the commutator", worst, 0.0,
                   detail="normalized excess over the majorant")]


def check_local_sum(cfg, rng):
    pe = verification_exponents(cfg)
    worst = 0.0
    for _ in range(cfg.trials["local_sum"]):
        Q0 = _random_root(cfg, rng)
        f = random_indicator_sum(cfg.box, cfg.cells_per_side, rng, support=Q0)
        lhs, rhs = local_sum_bound_check(cfg.kernel, f, pe.omega, Q0, cfg.lattice, cfg.kernel_delta, cfg.kernel_eps,
                                         float(cfg.tolerances["luxemburg"]))
        if rhs > 0:
            worst = max(worst, lhs / rhs)
    return [_upper("local_sum", "kernel mass of nested cube sums", worst, _frozen(cfg, "C_K"), "C_K")]


def _stopping_alpha(cfg, tau) -> float:
    a = cfg.verification.alpha
    if a != "auto":
        return float(a)
    frozen = cfg.constant("alpha_stopping", 0.0)
    if frozen > 1:
        return frozen
    return stopping_constants(tau, cfg.lattice, trials=6).alpha()


def check_stopping(cfg, rng):
    pe = verification_exponents(cfg)
    alpha = _stopping_alpha(cfg, pe.tau)
    w = build_weights(cfg).w
    failed, worst_pi = [], 0.0
    for t in range(cfg.trials["stopping"]):
        g = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
        G = stopping_functional(pe.tau, g * w, cfg.lattice, float(cfg.tolerances["luxemburg"]))
        fam = build_stopping_family(G, alpha, cfg.lattice)
        worst_pi = max(worst_pi, fam.Pi / alpha)
        failed += [f"{t}:{k}" for k, v in fam.checks.items() if not _check_ok(k, v)]
    return [CheckRow("stopping_family", "stopping cubes and their disjoint residual sets", not failed, worst_pi, 1.0,
                     None, "Pi/alpha; failed: " + (",".join(failed) if failed else "none"))]


def _check_ok(name, value) -> bool:
    if name == "sandwich_violations":
        return value == 0
    return bool(value)


def check_maximal(cfg, rng):
    lat = cfg.lattice
    spec = MaximalSpec(lat)
    N = cfg.cells_per_side
    seed = int(rng.integers(0, 2**31))
    ratio = boundedness_probe(spec, cfg.p, cfg.p, cfg.trials["maximal"], seed)
    rows = [_upper("maximal_bounded", "boundedness of the dyadic maximal operator", ratio, _frozen(cfg, "C_M"), "C_M")]
    if lat.j_max > lat.j_min:
        coarse = MaximalSpec(CubeLattice(lat.box, lat.j_min, lat.j_max - 1, lat.shifted_per_level, lat.seed))
        f = random_indicator_sum(cfg.box, N, rng)
        gap = float(np.min(maximal(spec, f).values - maximal(coarse, f).values))
        rows.append(CheckRow("maximal_refinement", "refining the lattice can only raise the maximal function",
                             bool(gap >= 0), gap, 0.0, None, "lower bound"))
    return rows


def check_fp(cfg, rng):
    """Scaling covariance, refinement monotonicity and agreement of the two testing functionals."""
    base = certify(cfg, "1.1")
    wts = build_weights(cfg)
    scaled = certify(cfg, "1.1", weights=wts.scaled(2.0, 8.0))
    cov = abs(scaled.kappa / (4.0 * base.kappa) - 1.0)
    rows = [_upper("fp_scaling", "testing functional scales like w / v", cov, float(cfg.tolerances["scaling"]))]
    lat = cfg.lattice
    if lat.j_max > lat.j_min:
        coarse = certify(cfg, "1.1", lattice=CubeLattice(lat.box, lat.j_min, lat.j_max - 1))
        gap = base.kappa - coarse.kappa
        rows.append(CheckRow("fp_refinement", "kappa is monotone under lattice refinement",
                             bool(gap >= -1e-12 * base.kappa), gap, 0.0, None, "lower bound"))
    pc = conjugate(cfg.p)
    s = ExponentField.promote(combine(pc, None, "scale", float(cfg.theorem["R"])))
    l = ExponentField.promote(combine(cfg.q, None, "scale", float(cfg.theorem["S"])))
    t11 = certify(cfg, "1.1", m=0)
    t12 = fefferman_phong_thm12(cfg.p, cfg.q, None, 0, cfg.kernel, GPhiFunction.power(s), GPhiFunction.power(l), wts,
                                cfg.lattice, float(cfg.tolerances["luxemburg"]))
    a, b = t11.table["functional"], t12.table["functional"]
    rel = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
    rows.append(_upper("fp_consistency", "power triples reduce the Phi-triple condition to the power one", rel,
                       float(cfg.tolerances["consistency"])))
    return rows


def check_symbol(cfg, rng):
    b = build_symbol(cfg)
    if b is None:
        b = build_symbol(cfg.with_overrides(symbol={"centers": [list(_default_center(cfg.box))]}))
    a = cfg.functional()
    lat = cfg.lattice
    rho = max(float(cfg.symbol["rho"]), 2.0)
    rep = lipschitz_seminorm(b, a, 1.0, lat)
    bn = rep.seminorm
    tinf = rep.t_infinity
    s_rho, s_one = seminorm_equivalence_check(b, a, rho, lat)
    equiv = s_rho / s_one
    rows = [
        CheckRow("seminorm_equivalence", "Lipschitz seminorms of order rho and 1 agree",
                 bool(1.0 - 1e-12 <= equiv <= _frozen(cfg, "C_rho")), equiv, _frozen(cfg, "C_rho"), "C_rho",
                 f"rho={rho}"),
        _upper("t_infinity", "nested-cube control of the functional", tinf, _frozen(cfg, "C_tinf"), "C_tinf"),
    ]
    cubes = [Q for Q in _suite_cubes(cfg, cfg.trials["symbol_cubes"]) if not Q.dilate(3.0).is_clipped(cfg.box)]
    gap, osc = 0.0, 0.0
    if cubes:
        a3 = a.values([Q.dilate(3.0) for Q in cubes])
        aq = a.values(cubes)
        for Q, x3, xq in zip(cubes, a3, aq):
            gap = max(gap, nested_average_gap(b, a, Q) / (tinf * x3 * bn))
            for k in (1, 2):
                osc = max(osc, oscillation_norm_ratio(b, cfg.p, k, Q) / (xq * bn) ** k)
    rows.append(_upper("nested_average_gap", "averages over Q and 3Q differ by a(3Q)", gap, _frozen(cfg, "C_gap"),
                       "C_gap", f"{len(cubes)} unclipped cubes"))
    rows.append(_upper("oscillation_norm", "variable-exponent oscillation of Lipschitz symbols", osc,
                       _frozen(cfg, "C_osc"), "C_osc", "k in {1, 2}"))
    if cfg.symbol.get("functional") == "variable":
        c1, c2 = variable_lipschitz_pointwise_check(b, cfg.delta_field(), 2000, lat, seed=int(rng.integers(0, 2**31)))
        rows.append(_upper("variable_lipschitz_pointwise", "pointwise form of variable Lipschitz symbols", c1,
                           _frozen(cfg, "C_vlip1"), "C_vlip1"))
        rows.append(_upper("variable_lipschitz_window", "pointwise form of variable Lipschitz symbols", c2,
                           _frozen(cfg, "C_vlip2"), "C_vlip2"))
    return rows


def check_condition_f(cfg, rng):
    abd, _ = build_triples(cfg)
    lat = CubeLattice(cfg.box, cfg.lattice.j_min, min(cfg.lattice.j_max, 8 if cfg.box.n == 1 else 5))
    rep = check_condition_F(abd, lat, stability_tol=float(cfg.tolerances["stability"]))
    return [CheckRow(f"condition_F_{k}", "condition F for Phi-function triples", rep.item_passed(k), rep.bounds[k],
                     None, None, f"example {cfg.triples['example']}") for k in ("i", "ii", "iii")]


def check_lemma_chain(cfg, rng):
    keys = {k: f"C_lemma_{k}" for k in "abcd"}
    consts = {k: _frozen(cfg, v) for k, v in keys.items()}
    rep = verify_lemma_chain(cfg.p, cfg.theta, cfg.lattice, consts)
    return [_upper(f"lemma_chain_{k}", "lemma chain behind the cube-norm formula", rep.maxima[k], consts[k], keys[k],
                   f"worst {rep.worst[k]}") for k in "abcd"]


SUITE_CHECKS = {
    "closed_form": check_closed_form,
    "unit_ball": check_unit_ball,
    "formula": check_formula,
    "indicator_product": check_indicator_product,
    "doubling_quotient": check_doubling_quotient,
    "holder": check_holder,
    "young": check_young,
    "duality": check_duality,
    "kernel": check_kernel,
    "disjoint_sum": check_disjoint_sum,
    "overlap": check_overlap,
    "regularity": check_regularity,
    "majorant": check_majorant,
    "local_sum": check_local_sum,
    "stopping": check_stopping,
    "maximal": check_maximal,
    "fp": check_fp,
    "symbol": check_symbol,
    "condition_F": check_condition_f,
    "lemma_chain": check_lemma_chain,
}


def _run_check(item):
    name, func, cfg, rng = item
    try:
        return func(cfg, rng)
    except (DomainError, ConfigError, ValueError, ArithmeticError) as exc:
        return [CheckRow(name, "error", False, math.nan, None, None, f"{type(exc).__name__}: {exc}")]


def run_invariant_suite(cfg: ExperimentConfig, seed: Optional[int] = None, jobs: int = 1,
                        only: Optional[list] = None) -> RunReport:
    """Every module invariant with the config's tolerances; failures are report rows."""
    t0 = time.perf_counter()
    seed = cfg.seed if seed is None else int(seed)
    names = list(SUITE_CHECKS) if only is None else list(only)
    unknown = [n for n in names if n not in SUITE_CHECKS]
    if unknown:
        raise ConfigError(f"unknown suite checks: {unknown}")
    # one child stream per check in the fixed registry order, whatever subset runs
    streams = dict(zip(SUITE_CHECKS, _spawn(seed, len(SUITE_CHECKS))))
    items = [(n, SUITE_CHECKS[n], cfg, streams[n]) for n in names]
    results = _pool_map(_run_check, items, jobs)
    rows = [r for group in results for r in group]
    rep = RunReport("suite", cfg.name, seed, rows,
                    measured={r.name: r.value for r in rows})
    rep.runtime = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------


def _round_up(x: float, digits: int = 3) -> float:
    if x <= 0 or not math.isfinite(x):
        return x
    e = math.floor(math.log10(x)) - digits + 1
    return float(f"{math.ceil(x / 10.0**e)}e{e}")


def calibrate(cfg: ExperimentConfig, seeds=(101, 102, 103), margin: float = 1.25, verify_margin: float = 1.5,
              jobs: int = 1) -> dict:
    """Fresh frozen constants for ``cfg``: suite measurements times ``margin``, theorem maxima times ``verify_margin``.

    Runs with every frozen bound disabled, so nothing depends on the current
    calibration file.
    """
    open_cfg = cfg.with_overrides(calibration={"section": "__calibrating__"})
    out = {}
    for s in seeds:
        rep = run_invariant_suite(open_cfg, seed=s, jobs=jobs)
        for row in rep.checks:
            if row.key and math.isfinite(row.value):
                out[row.key] = max(out.get(row.key, 0.0), row.value)
    out = {k: _round_up(margin * v) for k, v in out.items()}
    pe = verification_exponents(cfg)
    out["alpha_stopping"] = _round_up(stopping_constants(pe.tau, cfg.lattice, trials=20, seed=seeds[0]).alpha())
    for which in ("1.1", "1.2"):
        try:
            best = max(verify_theorem(which, open_cfg, seed=s, jobs=jobs).max_ratio[f"theorem_{which}"] for s in seeds)
        except ConfigError:
            continue
        out[f"verify_bound_{which.replace('.', '')}"] = _round_up(verify_margin * best)
    return dict(sorted(out.items()))
