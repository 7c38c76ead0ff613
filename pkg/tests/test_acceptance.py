"""Acceptance criteria 1-11.  Each test records one PASS/FAIL line, printed
in the terminal summary (or directly when this file is run as a script)."""

import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from varlex.conditions import check_condition_F, fefferman_phong_thm12
from varlex.domain import Box, CubeLattice, random_indicator_sum
from varlex.exponents import ExponentField, Field, combine, conjugate
from varlex.gphi import GPhiFunction, PhiTriple, young_defect
from varlex.harness.cli import cli_main
from varlex.harness.config import load_config, packaged_config
from varlex.harness.experiments import build_triples, build_weights, certify, formula_lattice, verification_exponents, \
    verify_theorem
from varlex.norm_formula import sample_cubes, verify_norm_formula
from varlex.operators import AnnulusConstantKernel, CallableKernel, FractionalKernel, apply_commutator, check_class_D
from varlex.sparse import build_stopping_family, dyadic_majorant, stopping_functional
from varlex.spaces import duality_lower_bound, holder_ratio, indicator_norms, luxemburg_norm
from varlex.symbols import power_symbol


def cfg(name):
    return load_config(packaged_config(name))


def record(num, ok, detail):
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[num] = line
    print(line)
    assert ok, line


def test_c01_closed_form_indicator_norms():
    worst, count = 0.0, 0
    for n in (1, 2):
        box = Box((0.5,) * n, 0.5)
        cubes = sample_cubes(CubeLattice(box, 0, 12 if n == 1 else 8), per_level=3)[:25]
        count += len(cubes)
        for p in (1.5, 2.0, 3.0):
            got = indicator_norms(Field.constant(box, p), cubes, tol=1e-12)
            exact = np.array([Q.measure ** (1 / p) for Q in cubes])
            worst = max(worst, float(np.max(np.abs(got / exact - 1))))
    record(1, count == 50 and worst < 1e-8, f"{count} cubes, p in {{1.5, 2, 3}}, max rel err {worst:.2e} < 1e-8")


def test_c02_cube_norm_formula():
    parts, ok = [], True
    for name in ("constant", "thm12_example1", "default"):
        c = cfg(name)
        tab = verify_norm_formula(c.p, c.theta, formula_lattice(c), 1e-10)
        C = c.constant("C_formula", math.inf)
        lo, hi = tab.ratio_range
        s = tab.slope()
        good = len(tab.cubes) >= 100 and tab.octaves >= 20 and abs(s) < 0.05 and 1 / C <= lo and hi <= C
        ok &= good
        parts.append(f"{name}: {len(tab.cubes)} cubes/{tab.octaves:.0f} oct, slope {s:+.3f}, "
                     f"ratio [{lo:.3f}, {hi:.3f}] in [1/{C}, {C}]")
    record(2, ok, "; ".join(parts))


def _worst_product(p, lattice, per_side):
    pc = conjugate(p)
    worst = 1.0
    for level in lattice.levels:
        cubes = lattice.level_cubes(level)
        r = indicator_norms(p, cubes, per_side) * indicator_norms(pc, cubes, per_side) / cubes[0].measure
        worst = max(worst, float(np.max(r)), float(np.max(1 / r)))
    return worst


def test_c03_indicator_product_stable_under_grid_doubling():
    parts, ok = [], True
    for name in ("default", "thm12_example1", "fractional"):
        c = cfg(name)
        C = c.constant("C_p", math.inf)
        per = 32 if c.box.n == 1 else 8
        lat = c.lattice
        base = _worst_product(c.p, lat, per)
        finer = _worst_product(c.p, CubeLattice(c.box, lat.j_min, lat.j_max + 1), 2 * per)
        good = base <= C and finer <= C and abs(finer / base - 1) <= 0.1
        ok &= good
        parts.append(f"{name}: C {base:.4f} -> {finer:.4f} (frozen {C})")
    record(3, ok, "; ".join(parts))


def test_c04_holder_young_duality():
    c = cfg("default")
    phi = GPhiFunction(c.p, c.theta)
    rng = np.random.default_rng(2024)
    N = 128
    holder = [holder_ratio(phi, random_indicator_sum(c.box, N, rng), random_indicator_sum(c.box, N, rng))
              for _ in range(500)]
    violations = sum(r > 2.0 for r in holder)
    k = 10_000
    x = rng.uniform(c.box.lo, c.box.hi, size=(k, 1))
    young = float(np.min(young_defect(phi, x, np.exp(rng.uniform(-6, 6, k)), np.exp(rng.uniform(-6, 6, k)))))
    duals = []
    for _ in range(100):
        f = random_indicator_sum(c.box, N, rng)
        duals.append(duality_lower_bound(phi, f, 12, rng) / luxemburg_norm(phi, f).value)
    ok = violations == 0 and young >= -1e-9 and 0.25 <= min(duals) and max(duals) <= 2.0
    record(4, ok, f"Hoelder max {max(holder):.4f} over 500 pairs ({violations} > 2); Young min defect {young:.2e} "
                  f"over {k}; duality ratios in [{min(duals):.3f}, {max(duals):.3f}] over 100 functions")


def test_c05_class_D():
    frac1 = check_class_D(FractionalKernel(0.5, n=1), 1.0, 0.0)
    frac2 = check_class_D(FractionalKernel(1.0, n=2), 1.0, 0.0)
    ann = check_class_D(AnnulusConstantKernel(0.5, n=1), 1.0, 0.0)
    spike = CallableKernel(lambda r: 1.0 if 9.0 < r <= 9.01 else 0.0, n=1, breakpoints=(9.0, 9.01))
    bad = check_class_D(spike, 0.125, 0.0)
    ok = frac1.pass_ and frac2.pass_ and ann.pass_ and not bad.pass_ and frac1.k_range == (-10, 10)
    record(5, ok, f"fractional c = {frac1.c_estimate:.4f} (1D), {frac2.c_estimate:.4f} (2D); annulus-constant "
                  f"c = {ann.c_estimate:.4f}; spike kernel c = {bad.c_estimate} (fails)")


def test_c06_sparse_domination():
    rng = np.random.default_rng(606)
    violations, worst = 0, -math.inf
    for i in range(20):
        n = 1 if i % 2 == 0 else 2
        box = Box((0.5,) * n, 0.5)
        N = 512 if n == 1 else 64
        K = FractionalKernel(0.5 if n == 1 else 1.0, n=n)
        m = i % 3
        f = random_indicator_sum(box, N, rng)
        b = None
        if m:
            b = power_symbol(box, N, [rng.uniform(0.1, 0.9, size=n)], [float(rng.uniform(0.1, 1.0))],
                             [float(rng.uniform(0.5, 2.0))])
        T, slack = apply_commutator(K, b, m, f, return_slack=True)
        M = dyadic_majorant(K, b, m, f)
        excess = np.abs(T.values) - M.values - slack
        violations += int(np.sum(excess > 0))
        worst = max(worst, float(np.max(excess / np.max(M.values))))
    record(6, violations == 0, f"20 configs (1D/2D, m in {{0,1,2}}): {violations} violations beyond quadrature "
                               f"slack; max normalized excess {worst:.3e}")


def test_c07_stopping_families():
    rng = np.random.default_rng(707)
    ok, worst_ratio = True, 0.0
    for i in range(10):
        c = cfg("thm11_lipschitz" if i % 2 else "default")
        pe = verification_exponents(c)
        alpha = c.constant("alpha_stopping", 2.0)
        g = random_indicator_sum(c.box, c.cells_per_side, rng)
        G = stopping_functional(pe.tau, g * build_weights(c).w, c.lattice)
        fam = build_stopping_family(G, alpha, c.lattice)
        r = fam.Pi / alpha
        worst_ratio = max(worst_ratio, r)
        ok &= fam.checks["F_disjoint"] and fam.checks["fixed_k_disjoint"] and r < 1
        # integer cell counts make the measure comparison exact
        for k in fam.measures:
            ok &= all(q * (1 - r) < f for q, f in zip(fam.measures[k], fam.residual[k]))
    record(7, ok, f"10 fields: residual sets disjoint, max Pi/alpha {worst_ratio:.4f} < 1, "
                  f"|Q| < |F|/(1 - Pi/alpha) on every cube")


def test_c08_fp_flatness_and_control():
    c = cfg("thm11_flat")
    rep = certify(c, "1.1")
    prof = rep.level_profile()
    flat = rep.flatness() - 1
    equal = c.with_overrides(exponents={"q": {"kind": "constant", "value": 2.0}})
    prof2 = list(certify(equal, "1.1").level_profile().values())
    grows = all(a > b for a, b in zip(prof2, prof2[1:]))
    ok = len(prof) >= 10 and flat < 0.2 and grows
    record(8, ok, f"p=2, q=4, alpha=1/4: {len(prof)} levels, variation {flat:.2e} < 20%; q=p grows "
                  f"{prof2[-1]:.3f} -> {prof2[0]:.3f} with cube size")


def test_c09_two_weight_bound_end_to_end():
    parts, ok = [], True
    for name in ("thm11_flat", "thm11_lipschitz", "thm11_variable"):
        c = cfg(name)
        bound = c.constant("verify_bound_11", math.inf)
        ratios = []
        for seed in (0, 1, 2):
            rep = verify_theorem("1.1", c, seed=seed, trials=200)
            ratios.append(rep.max_ratio["theorem_1.1"])
            ok &= rep.passed
        ok &= max(ratios) < bound
        parts.append(f"{name} (m={c.m}): max ratio {max(ratios):.4f} < {bound}")
    record(9, ok, "200 f x 3 seeds; " + "; ".join(parts))


def test_c10_condition_F_and_consistency():
    parts, ok = [], True
    for name in ("thm12_example1", "thm12_example2"):
        c = cfg(name)
        abd, _ = build_triples(c)
        rep = check_condition_F(abd, CubeLattice(c.box, 0, 8))
        ok &= rep.passed
        parts.append(f"{name}: (i) {rep.bounds['i']:.3f} (ii) {rep.bounds['ii']:.3f} (iii) {rep.bounds['iii']:.3f}")
    c = cfg("thm12_example1")
    t2 = GPhiFunction.power(Field.constant(c.box, 2.0))
    bad = check_condition_F(PhiTriple(t2, t2, t2), CubeLattice(c.box, 0, 8))
    ok &= not bad.item_passed("ii")
    s = ExponentField.promote(combine(conjugate(c.p), None, "scale", float(c.theorem["R"])))
    l = ExponentField.promote(combine(c.q, None, "scale", float(c.theorem["S"])))
    t11 = certify(c, "1.1", m=0)
    t12 = fefferman_phong_thm12(c.p, c.q, None, 0, c.kernel, GPhiFunction.power(s), GPhiFunction.power(l),
                                build_weights(c), c.lattice)
    a, b = t11.table["functional"], t12.table["functional"]
    rel = float(np.max(np.abs(a - b) / np.abs(a)))
    ok &= rel < 1e-8
    record(10, ok, "; ".join(parts) + f"; t^2 triple fails (ii) (slope {bad.slopes['ii']:.2f}); "
                   f"power-triple vs power condition max rel diff {rel:.1e} over {len(a)} cubes")


def test_c11_cli_determinism(tmp_path):
    runs = {
        "verify": ["verify", "1.1", "--config", "thm11_flat", "--seed", "7"],
        "suite": ["suite", "--config", "thm11_flat", "--seed", "7"],
    }
    same, files = True, 0
    for label, argv in runs.items():
        for fmt in ("json", "csv"):
            outs = []
            for jobs in (1, 8):
                d = tmp_path / f"{label}_{fmt}_{jobs}"
                code = cli_main(argv + ["--format", fmt, "--jobs", str(jobs), "--out", str(d)])
                assert code == 0
                outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
            same &= outs[0] == outs[1]
            files += len(outs[0])
    record(11, same, f"verify and suite, json and csv: {files} output files byte-identical with --jobs 1 and 8")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
