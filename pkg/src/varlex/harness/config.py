"""Experiment configuration: a TOML file with one table per module.

Grammar (every key optional unless marked required)::

    name = "thm11_flat"            # report label and default calibration section
    seed = 0

    [domain]
    n = 1                          # 1 or 2
    lo = 0.0                       # box lower corner (scalar, or one value per axis)
    side = 1.0                     # box side length
    grid_depth = 10                # 2**grid_depth cells per side (<= 12 in 1D, <= 9 in 2D)
    levels = [0, 9]                # lattice levels j_min..j_max (at most 12 levels)
    shifted_per_level = 0

    [exponents.p]                  # required; any exponent table below
    kind = "constant" | "affine" | "log_smooth" | "loglog_smooth" | "tabulated"
    value = 2.0                    # constant
    slope = 0.5                    # affine: clamp(intercept + slope . x, lo, hi)
    intercept = 1.5
    lo = 1.5
    hi = 2.5
    p_inf = 2.0                    # log_smooth
    amplitude = 0.3                # log_smooth, loglog_smooth
    base = 1.0                     # loglog_smooth
    center = [0.5]                 # log_smooth, loglog_smooth
    values = [...]                 # tabulated (cell values), or path = "file.csv"

    [exponents.q]                  # target exponent (defaults to p)
    [exponents.theta]              # log power for the L^p(log L)^theta tables (default: none)
    [exponents.r]                  # exponent behind delta(.) = n (1/gamma - 1/r(.))

    [kernel]
    kind = "fractional" | "bessel" | "annulus_constant" | "tabulated"
    alpha = 0.25                   # fractional, annulus_constant
    beta = 1.0                     # bessel
    lambda = 1.0                   # bessel
    radii = [...]                  # tabulated, with values = [...] (or path = "file.csv")
    delta = 1.0                    # class-D dilation
    eps = 0.0                      # class-D annulus widening

    [symbol]
    functional = "one" | "power" | "variable"   # a(Q): 1, |Q|^(delta/n), ||chi_Q||_(n/delta(.))
    delta = 0.25                   # power functional
    gamma = 1.6                    # variable functional, with [exponents.r]
    rho = 1.0                      # oscillation exponent of the Lipschitz seminorm
    centers = [[0.37]]             # b(x) = sum_i c_i |x - x_i|^e_i
    powers = [0.25]                # "delta+" takes the largest value of delta(.)
    coefficients = [1.0]

    [weights]
    kind = "unit" | "power"        # power: v = |x - center|^gamma_v, w = |x - center|^gamma_w
    gamma_v = 0.1
    gamma_w = 0.1
    center = [0.41]

    [theorem]
    which = "1.1" | "1.2"
    m = 0                          # commutator order
    R = 2.0                        # local average exponent R p' on v^-1
    S = 1.5                        # local average exponent S q on w
    sigma = 3.0                    # example triples
    eps = 0.1                      # second example triple
    refinement_tol = 0.1           # allowed growth of kappa when the finest level is added

    [triples]
    example = 1                    # 1 or 2
    [triples.mu]                   # exponent table, second example only
    [triples.nu]                   # exponent table, second example only (default 0)

    [verification]
    alpha = "auto"                 # stopping threshold, or a number
    mu = 1.75                      # proof-internal constants (default: midpoints)
    nu = 1.25

    [trials]                       # counts used by verify and the invariant suite
    verify = 200
    ...

    [tolerances]
    luxemburg = 1e-10
    ...

    [calibration]
    section = "thm11_flat"         # section of the calibration file to use (default: name)
    verify_bound = 1.0             # any frozen constant may be overridden here

Every precondition is checked at load; a violation raises ``ConfigError``
naming the inequality that fails.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..domain import Box, CubeLattice
from ..exceptions import ConfigError, DomainError
from ..exponents import ExponentField, Field, conjugate, delta_exponent, exponent_from_config, field_from_config
from ..operators import Kernel, kernel_from_config
from ..symbols import CubeFunctional

__all__ = [
    "TRIAL_DEFAULTS",
    "TOLERANCE_DEFAULTS",
    "VerificationParameters",
    "ExperimentConfig",
    "load_config",
    "load_calibration",
    "default_config_path",
    "packaged_config",
]

TRIAL_DEFAULTS = {
    "verify": 200,
    "unit_ball": 20,
    "holder": 60,
    "young": 2000,
    "duality_functions": 6,
    "duality_candidates": 40,
    "disjoint": 8,
    "overlap": 4,
    "majorant": 4,
    "local_sum": 4,
    "stopping": 3,
    "maximal": 6,
    "symbol_cubes": 24,
    "closed_form_cubes": 50,
}

TOLERANCE_DEFAULTS = {
    "luxemburg": 1e-10,
    "closed_form": 1e-8,
    "unit_ball": 1e-6,
    "young": 1e-9,
    "formula_slope": 0.05,
    "stability": 0.1,
    "consistency": 1e-8,
    "scaling": 1e-12,
}

_LEVEL_LIMIT = 12
_DEPTH_LIMIT = {1: 12, 2: 9}


@dataclass(frozen=True)
class VerificationParameters:
    """Proof-internal choices: stopping threshold and the constants ``mu``, ``nu``."""

    alpha: object = "auto"
    mu: Optional[float] = None
    nu: Optional[float] = None


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    box: Box
    grid_depth: int
    lattice: CubeLattice
    p: ExponentField
    q: ExponentField
    theta: Optional[Field]
    r: Optional[ExponentField]
    kernel: Kernel
    kernel_delta: float
    kernel_eps: float
    symbol: dict
    weights: dict
    theorem: dict
    triples: dict
    verification: VerificationParameters
    trials: dict
    tolerances: dict
    calibration: dict
    source: Optional[str] = None
    raw: dict = field(default_factory=dict)

    @property
    def cells_per_side(self) -> int:
        return 1 << self.grid_depth

    @property
    def m(self) -> int:
        return int(self.theorem.get("m", 0))

    @property
    def calibration_section(self) -> str:
        return str(self.calibration.get("section", self.name))

    def constant(self, key: str, default: Optional[float] = None) -> float:
        """Frozen constant ``key``: config override first, then the calibration file."""
        if key in self.calibration:
            return float(self.calibration[key])
        table = load_calibration().get(self.calibration_section, {})
        if key in table:
            return float(table[key])
        if default is not None:
            return float(default)
        raise ConfigError(f"no frozen constant {key!r} for calibration section {self.calibration_section!r}; "
                          "run `varlex calibrate` to generate one")

    def delta_field(self) -> Optional[Field]:
        if self.symbol.get("functional") != "variable":
            return None
        return delta_exponent(float(self.symbol["gamma"]), self.r, self.box.n)

    def functional(self) -> CubeFunctional:
        kind = self.symbol.get("functional", "one")
        n = self.box.n
        if kind == "one":
            return CubeFunctional.one(n)
        if kind == "power":
            return CubeFunctional.power(float(self.symbol["delta"]), n)
        return CubeFunctional.variable(self.delta_field())

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """A re-validated copy with whole sections of the raw table replaced or merged."""
        raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in self.raw.items()}
        for key, val in sections.items():
            if isinstance(val, dict) and isinstance(raw.get(key), dict):
                raw[key].update(val)
            else:
                raw[key] = val
        return config_from_dict(raw, self.source)


def _fail(msg: str):
    raise ConfigError(msg)


def _box(dom: dict) -> Box:
    n = int(dom.get("n", 1))
    if n not in (1, 2):
        _fail(f"domain dimension must be 1 or 2 (got n = {n})")
    side = float(dom.get("side", 1.0))
    if not side > 0:
        _fail("domain side must be positive")
    lo = np.broadcast_to(np.asarray(dom.get("lo", 0.0), dtype=float), (n,))
    return Box(tuple(lo + 0.5 * side), 0.5 * side)


def _exponent(spec: Optional[dict], box: Box, label: str) -> Optional[ExponentField]:
    if spec is None:
        return None
    try:
        return exponent_from_config(spec, box)
    except (ConfigError, DomainError) as exc:
        raise ConfigError(f"exponent {label}: {exc}") from exc


def _field(spec: Optional[dict], box: Box, label: str) -> Optional[Field]:
    if spec is None:
        return None
    try:
        return field_from_config(spec, box)
    except (ConfigError, DomainError) as exc:
        raise ConfigError(f"field {label}: {exc}") from exc


def _pointwise_le(a: Field, b: Field) -> bool:
    pts = np.vstack([a.sample_points(), b.sample_points()])
    return bool(np.all(a(pts) <= b(pts) + 1e-12))


def config_from_dict(raw: dict, source: Optional[str] = None) -> ExperimentConfig:
    name = str(raw.get("name", Path(source).stem if source else "default"))
    seed = int(raw.get("seed", 0))
    dom = dict(raw.get("domain", {}))
    box = _box(dom)
    n = box.n
    depth = int(dom.get("grid_depth", 10 if n == 1 else 6))
    if not 1 <= depth <= _DEPTH_LIMIT[n]:
        _fail(f"grid depth must satisfy 1 <= grid_depth <= {_DEPTH_LIMIT[n]} in dimension {n} (got {depth})")
    j_min, j_max = (int(v) for v in dom.get("levels", [0, depth]))
    if j_min > j_max:
        _fail(f"lattice levels need j_min <= j_max (got {j_min} > {j_max})")
    if j_max - j_min + 1 > _LEVEL_LIMIT:
        _fail(f"lattice may hold at most {_LEVEL_LIMIT} levels (got {j_max - j_min + 1})")
    lattice = CubeLattice(box, j_min, j_max, int(dom.get("shifted_per_level", 0)), seed)

    exps = dict(raw.get("exponents", {}))
    if "p" not in exps:
        _fail("missing required table [exponents.p]")
    p = _exponent(exps["p"], box, "p")
    q = _exponent(exps.get("q"), box, "q") or p
    theta = _field(exps.get("theta"), box, "theta")
    r = _exponent(exps.get("r"), box, "r")
    if not p.minus > 1:
        _fail(f"violated 1 < p^- (exponent hypothesis of the commutator bounds; p^- = {p.minus:.6g})")
    if not math.isfinite(q.plus):
        _fail("violated q^+ < infinity (exponent hypothesis of the commutator bounds)")
    if not _pointwise_le(p, q):
        _fail("violated p(x) <= q(x) (exponent ordering of the two-weight bounds)")
    if theta is not None and theta.minus < 0:
        _fail(f"violated theta >= 0 (log power of L^p(log L)^theta; theta^- = {theta.minus:.6g})")

    kspec = dict(raw.get("kernel", {"kind": "fractional", "alpha": 0.5}))
    kernel = kernel_from_config(kspec, n)
    kdelta = float(kspec.get("delta", 1.0))
    keps = float(kspec.get("eps", 0.0))
    if not kdelta > 0:
        _fail("violated delta > 0 (class D dilation)")
    if not 0 <= keps < 1:
        _fail("violated 0 <= eps < 1 (class D annulus widening)")

    symbol = dict(raw.get("symbol", {}))
    symbol.setdefault("functional", "one")
    symbol.setdefault("rho", 1.0)
    if symbol["functional"] not in ("one", "power", "variable"):
        _fail(f"unknown symbol functional {symbol['functional']!r}")
    if not float(symbol["rho"]) >= 1:
        _fail(f"violated rho >= 1 (Lipschitz seminorm exponent; rho = {symbol['rho']})")
    if symbol["functional"] == "power":
        d = float(symbol.get("delta", -1))
        if not 0 < d <= 1:
            _fail(f"violated 0 < delta <= 1 (power functional |Q|^(delta/n); delta = {d})")
    theorem = dict(raw.get("theorem", {}))
    theorem.setdefault("which", "1.1")
    theorem.setdefault("m", 0)
    theorem.setdefault("refinement_tol", 0.1)
    m = theorem["m"]
    if not (isinstance(m, int) and m >= 0):
        _fail(f"violated m in {{0, 1, 2, ...}} (commutator order; m = {m!r})")
    pc = conjugate(p)
    R = float(theorem.get("R", 2.0 * pc.plus / pc.minus))
    S = float(theorem.get("S", 2.0 * q.plus / q.minus))
    theorem["R"], theorem["S"] = R, S
    if not R > pc.plus / pc.minus:
        _fail(f"violated R > (p')^+/(p')^- = {pc.plus / pc.minus:.6g} (two-weight testing exponent; R = {R})")
    if not S > q.plus / q.minus:
        _fail(f"violated S > q^+/q^- = {q.plus / q.minus:.6g} (two-weight testing exponent; S = {S})")
    if symbol["functional"] == "variable":
        if r is None or "gamma" not in symbol:
            _fail("the variable functional needs [exponents.r] and symbol.gamma")
        try:
            delta = delta_exponent(float(symbol["gamma"]), r, n)
        except DomainError as exc:
            raise ConfigError(f"violated delta(.) admissibility: {exc}") from exc
        if not (delta.minus > 0 and delta.plus <= 1):
            _fail(f"violated 0 < delta(.) <= 1 (variable Lipschitz order; delta in [{delta.minus:.6g}, {delta.plus:.6g}])")

    triples = dict(raw.get("triples", {}))
    triples.setdefault("example", 1)
    sigma = float(theorem.get("sigma", 2.0 * pc.plus / pc.minus))
    theorem["sigma"] = sigma
    if not sigma > pc.plus / pc.minus:
        _fail(f"violated sigma > (p')^+/(p')^- = {pc.plus / pc.minus:.6g} (example triples; sigma = {sigma})")
    if int(triples["example"]) not in (1, 2):
        _fail(f"unknown example triple {triples['example']!r}")
    if int(triples["example"]) == 2:
        eps = float(theorem.get("eps", 0.1))
        if not 0 < eps < 1:
            _fail(f"violated eps in (0, 1) (second example triple; eps = {eps})")
        if "mu" not in triples:
            _fail("the second example triple needs [triples.mu]")

    weights = dict(raw.get("weights", {"kind": "unit"}))
    weights.setdefault("kind", "unit")
    if weights["kind"] not in ("unit", "power"):
        _fail(f"unknown weight kind {weights['kind']!r}")
    if weights["kind"] == "power":
        gv = float(weights.get("gamma_v", 0.0))
        s_plus = R * pc.plus
        if not gv * s_plus < n:
            _fail(f"violated gamma_v (R p')^+ < n (v^-1 locally in L^(Rp'); gamma_v = {gv})")
        gw = float(weights.get("gamma_w", 0.0))
        if not gw * S * q.plus > -n:
            _fail(f"violated gamma_w (S q)^+ > -n (w locally in L^(Sq); gamma_w = {gw})")

    ver = dict(raw.get("verification", {}))
    alpha = ver.get("alpha", "auto")
    if alpha != "auto" and not float(alpha) > 1:
        _fail(f"violated alpha > 1 (stopping threshold; alpha = {alpha})")
    verification = VerificationParameters(alpha, ver.get("mu"), ver.get("nu"))

    trials = dict(TRIAL_DEFAULTS)
    trials.update(raw.get("trials", {}))
    for k, v in trials.items():
        if not (isinstance(v, int) and v >= 1):
            _fail(f"trial count {k} must be a positive integer (got {v!r})")
    tolerances = dict(TOLERANCE_DEFAULTS)
    tolerances.update(raw.get("tolerances", {}))
    for k, v in tolerances.items():
        if not float(v) > 0:
            _fail(f"tolerance {k} must be positive (got {v!r})")
    calibration = dict(raw.get("calibration", {}))

    return ExperimentConfig(name, seed, box, depth, lattice, p, q, theta, r, kernel, kdelta, keps, symbol, weights,
                            theorem, triples, verification, trials, tolerances, calibration, source, dict(raw))


def load_config(path=None) -> ExperimentConfig:
    """Parse and validate a config file; ``None`` loads the packaged default."""
    path = Path(path) if path is not None else default_config_path()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return config_from_dict(raw, str(path))


def packaged_config(name: str) -> Path:
    """Path of a config shipped with the package (``name`` with or without ``.toml``)."""
    stem = name[:-5] if name.endswith(".toml") else name
    return Path(str(resources.files("varlex.harness") / "configs" / f"{stem}.toml"))


def default_config_path() -> Path:
    return packaged_config("default")


def calibration_path() -> Path:
    env = os.environ.get("VARLEX_DEFAULTS")
    if env:
        return Path(env)
    return Path(str(resources.files("varlex.harness") / "calibration.toml"))


_CAL_CACHE: dict = {}


def load_calibration(path=None) -> dict:
    """Frozen constants by section; ``VARLEX_DEFAULTS`` overrides the packaged file."""
    path = Path(path) if path is not None else calibration_path()
    key = (str(path), path.stat().st_mtime_ns if path.exists() else None)
    if key not in _CAL_CACHE:
        if not path.exists():
            raise ConfigError(f"calibration file not found: {path}")
        with open(path, "rb") as fh:
            _CAL_CACHE[key] = tomllib.load(fh)
    return _CAL_CACHE[key]
