"""Command-line entry point ``varlex``.

Subcommands: ``norm``, ``check-kernel``, ``certify``, ``verify``, ``suite``,
``formula``, ``sparse`` and the maintenance command ``calibrate``.  Every
subcommand takes ``--config PATH`` (a file, or the name of a packaged
config), ``--seed N``, ``--out DIR``, ``--format {csv,json}`` and
``--jobs N``.  Output goes to stdout, or to ``DIR/<command>_<config>.<format>``.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 when the configuration (or an input file) is rejected.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..domain import GridFunction
from ..exceptions import ConfigError, DomainError
from ..exponents import ExponentField, Field
from ..gphi import GPhiFunction
from ..norm_formula import verify_norm_formula
from ..operators import check_class_D
from ..domain import random_indicator_sum
from ..spaces import luxemburg_norm
from ..sparse import build_stopping_family, stopping_functional
from .config import ExperimentConfig, calibration_path, load_config, packaged_config
from .experiments import (_stopping_alpha, build_weights, calibrate, certify, formula_lattice, run_invariant_suite,
                          verification_exponents, verify_theorem)
from .report import CheckRow, RunReport, format_number, render_json

__all__ = ["main", "cli_main", "build_parser", "write_calibration"]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="config file or packaged config name")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (default: the config's)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker threads")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="varlex", parents=[common],
                                 description="Variable-exponent norms, commutators and two-weight certifiers.")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("norm", parents=[common], help="Luxemburg norm of a grid function read from a file")
    s.add_argument("--grid", required=True, help="grid function (.csv or .npz)")
    s.add_argument("--exponent", help="tabulated exponent p (.csv of cell values); default: the config's p")
    s.add_argument("--weight", help="weight multiplying the function (.csv or .npz)")
    s.add_argument("--log-power", type=float, help="constant log power theta; default: the config's theta")
    sub.add_parser("check-kernel", parents=[common], help="class-D test of the configured kernel")
    s = sub.add_parser("certify", parents=[common], help="testing-functional table of the configured theorem")
    s.add_argument("which", nargs="?", choices=("1.1", "1.2"))
    s = sub.add_parser("verify", parents=[common], help="end-to-end theorem run on random functions")
    s.add_argument("which", choices=("1.1", "1.2"))
    s.add_argument("--trials", type=int)
    s = sub.add_parser("suite", parents=[common], help="every module invariant")
    s.add_argument("--only", nargs="+", help="subset of suite checks")
    sub.add_parser("formula", parents=[common], help="measured vs predicted cube norms")
    s = sub.add_parser("sparse", parents=[common], help="stopping family of a random g w field")
    s.add_argument("--alpha", type=float, help="stopping threshold (default: the config's)")
    s = sub.add_parser("calibrate", parents=[common], help="regenerate frozen constants (maintenance)")
    s.add_argument("configs", nargs="*", help="config names or files (default: every packaged config)")
    s.add_argument("--margin", type=float, default=1.25)
    s.add_argument("--verify-margin", type=float, default=1.5)
    return ap


_DEFAULTS = {"config": None, "seed": None, "out": None, "format": "json", "jobs": 1}


def _resolve_config(spec: Optional[str]) -> ExperimentConfig:
    if spec is None:
        return load_config()
    path = Path(spec)
    if not path.exists():
        packaged = packaged_config(spec)
        if packaged.exists():
            path = packaged
    return load_config(path)


def _emit(text: str, args, stem: str, ext: Optional[str] = None):
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.{ext or args.format}").write_text(text)


def _rows_csv(rows: list[dict]) -> str:
    import csv
    import io

    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    if rows:
        wr.writerow(list(rows[0]))
        for r in rows:
            wr.writerow([format_number(v) if isinstance(v, float) else v for v in r.values()])
    return buf.getvalue()


def _read_grid(path: str) -> GridFunction:
    if path.endswith(".npz"):
        return GridFunction.from_binary(path)
    return GridFunction.from_csv(path)


def cmd_norm(cfg: ExperimentConfig, args) -> int:
    f = _read_grid(args.grid)
    if f.box != cfg.box:
        raise DomainError("grid box differs from the config box")
    if args.exponent:
        vals = np.loadtxt(args.exponent, delimiter=",", ndmin=f.n)
        p = ExponentField.promote(Field.tabulated(f.box, vals))
    else:
        p = cfg.p
    theta = cfg.theta
    if args.log_power is not None:
        theta = None if args.log_power == 0 else Field.constant(f.box, args.log_power)
    if args.weight:
        f = f * _read_grid(args.weight)
    res = luxemburg_norm(GPhiFunction(p, theta), f, tol=float(cfg.tolerances["luxemburg"]))
    d = res.to_dict()
    text = render_json(d) if args.format == "json" else _rows_csv([d])
    _emit(text, args, f"norm_{cfg.name}")
    return 0


def cmd_check_kernel(cfg: ExperimentConfig, args) -> int:
    rep = check_class_D(cfg.kernel, cfg.kernel_delta, cfg.kernel_eps)
    d = {"kernel": json.dumps(cfg.kernel.describe(), sort_keys=True), **rep.to_dict()}
    text = render_json(d) if args.format == "json" else _rows_csv([d])
    _emit(text, args, f"check-kernel_{cfg.name}")
    return 0 if rep.pass_ else 1


def cmd_certify(cfg: ExperimentConfig, args) -> int:
    fp = certify(cfg, args.which)
    if args.format == "csv":
        text = fp.to_csv()
    else:
        d = fp.to_dict()
        d["flatness"] = fp.flatness()
        text = render_json(d)
    _emit(text, args, f"certify_{cfg.name}")
    return 0 if math.isfinite(fp.kappa) else 1


def _emit_report(rep: RunReport, args, stem: str) -> int:
    _emit(rep.render(args.format), args, stem)
    sys.stderr.write(f"{rep.command}: {'pass' if rep.passed else 'FAIL'} ({rep.runtime:.2f} s)\n")
    for c in rep.failures():
        sys.stderr.write(f"  failed {c.name}: value {format_number(c.value)} bound {c.bound} {c.detail}\n")
    return 0 if rep.passed else 1


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    rep = verify_theorem(args.which, cfg, seed=args.seed, jobs=args.jobs, trials=args.trials)
    if args.out is not None:
        wf = rep.artifacts["worst_f"]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        wf.to_csv(out / f"verify_{args.which}_{cfg.name}_worst_f.csv")
    return _emit_report(rep, args, f"verify_{args.which}_{cfg.name}")


def cmd_suite(cfg: ExperimentConfig, args) -> int:
    rep = run_invariant_suite(cfg, seed=args.seed, jobs=args.jobs, only=args.only)
    return _emit_report(rep, args, f"suite_{cfg.name}")


def cmd_formula(cfg: ExperimentConfig, args) -> int:
    tab = verify_norm_formula(cfg.p, cfg.theta, formula_lattice(cfg), float(cfg.tolerances["luxemburg"]),
                              8 if cfg.box.n == 1 else 12)
    text = tab.to_csv() if args.format == "csv" else render_json(tab.summary())
    _emit(text, args, f"formula_{cfg.name}")
    return 0 if abs(tab.slope()) < float(cfg.tolerances["formula_slope"]) else 1


def cmd_sparse(cfg: ExperimentConfig, args) -> int:
    seed = cfg.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    pe = verification_exponents(cfg)
    alpha = args.alpha if args.alpha is not None else _stopping_alpha(cfg, pe.tau)
    g = random_indicator_sum(cfg.box, cfg.cells_per_side, rng)
    G = stopping_functional(pe.tau, g * build_weights(cfg).w, cfg.lattice, float(cfg.tolerances["luxemburg"]))
    fam = build_stopping_family(G, alpha, cfg.lattice)
    if args.format == "json":
        text = render_json(fam.to_dict())
    else:
        rows = [{"k": lv["k"], "level": c["level"], "index": " ".join(map(str, c["index"])), "G": float(c["G"]),
                 "measure": float(c["measure"]), "residual": float(c["residual"])}
                for lv in fam.to_dict()["levels"] for c in lv["cubes"]]
        text = _rows_csv(rows)
    _emit(text, args, f"sparse_{cfg.name}")
    return 0 if fam.passed else 1


_ALL_PACKAGED = ("default", "thm11_flat", "fractional", "thm11_lipschitz", "thm11_variable", "thm12_example1",
                 "thm12_example2", "constant")


def write_calibration(sections: dict, path, seeds, margin, verify_margin) -> str:
    """Calibration file text: provenance header, then one table per config."""
    lines = [
        "# Frozen calibration constants.",
        "#",
        "# Regenerate only on purpose:  varlex calibrate [configs...] --out <dir>",
        f"# Generated {datetime.date.today().isoformat()} by varlex {__version__} with seeds {list(seeds)}.",
        f"# Suite constants are the largest measurement times {margin}; theorem bounds the",
        f"# largest end-to-end ratio times {verify_margin} (both rounded up to 3 digits).",
        "# Keys: C_p indicator product, G_p disjoint sums, C_K local sums, C_overlap depth sums,",
        "# C_formula cube formula, C_lemma_* lemma chain, C_M maximal operator, C_doubling,",
        "# C_quotient, C_rho, C_tinf, C_gap, C_osc, C_vlip* symbol constants, alpha_stopping,",
        "# verify_bound_11 / verify_bound_12 end-to-end bounds.",
        "",
    ]
    for name, consts in sections.items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {float(v)!r}" for k, v in consts.items()]
        lines.append("")
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text


def cmd_calibrate(args) -> int:
    names = args.configs or list(_ALL_PACKAGED)
    seeds = (101, 102, 103)
    sections = {}
    for name in names:
        cfg = _resolve_config(name)
        sys.stderr.write(f"calibrating {cfg.name}...\n")
        sections[cfg.calibration_section] = calibrate(cfg, seeds, args.margin, args.verify_margin, args.jobs)
    target = None
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        target = Path(args.out) / "calibration.toml"
    text = write_calibration(sections, target, seeds, args.margin, args.verify_margin)
    if target is None:
        sys.stdout.write(text)
    else:
        sys.stderr.write(f"wrote {target} (active file: {calibration_path()})\n")
    return 0


_COMMANDS = {
    "norm": cmd_norm,
    "check-kernel": cmd_check_kernel,
    "certify": cmd_certify,
    "verify": cmd_verify,
    "suite": cmd_suite,
    "formula": cmd_formula,
    "sparse": cmd_sparse,
}


def cli_main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    for k, v in _DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    if args.jobs < 1:
        ap.error("--jobs must be at least 1")
    try:
        if args.command == "calibrate":
            return cmd_calibrate(args)
        cfg = _resolve_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError, OSError) as exc:
        sys.stderr.write(f"varlex: configuration rejected: {exc}\n")
        return 2


def main(argv=None):
    sys.exit(cli_main(argv))


if __name__ == "__main__":
    main()
