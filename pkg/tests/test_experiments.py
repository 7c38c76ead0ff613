import numpy as np
import pytest

from varlex.exceptions import ConfigError
from varlex.harness.config import load_config, packaged_config
from varlex.harness.experiments import SUITE_CHECKS, certify, refinement_growth, run_invariant_suite, verify_theorem


def cfg(name):
    return load_config(packaged_config(name))


def test_suite_passes_on_flat_config():
    rep = run_invariant_suite(cfg("thm11_flat"))
    assert rep.passed, [c.name for c in rep.failures()]
    assert {c.name for c in rep.checks} >= {"closed_form", "formula_slope", "majorant", "stopping_family"}


def test_check_streams_do_not_depend_on_subset():
    c = cfg("default")
    alone = run_invariant_suite(c, seed=5, only=["young", "kernel"])
    both = run_invariant_suite(c, seed=5, only=["unit_ball", "young", "kernel"])
    assert alone.check("young").value == both.check("young").value


def test_unknown_check_is_rejected():
    with pytest.raises(ConfigError):
        run_invariant_suite(cfg("thm11_flat"), only=["nope"])
    assert list(SUITE_CHECKS)[0] == "closed_form"


def test_verify_is_seed_reproducible():
    c = cfg("thm11_lipschitz")
    a = verify_theorem("1.1", c, seed=3, trials=12)
    b = verify_theorem("1.1", c, seed=3, trials=12, jobs=4)
    assert a.to_json() == b.to_json()
    assert a.max_ratio["theorem_1.1"] < c.constant("verify_bound_11", np.inf)


def test_zero_symbol_gives_zero_commutator():
    c = cfg("thm11_lipschitz").with_overrides(symbol={"coefficients": [0.0]})
    rep = verify_theorem("1.1", c, trials=5)
    assert rep.max_ratio["theorem_1.1"] == 0.0


def test_growing_testing_functional_is_rejected_before_trials():
    # alpha + 1/q - 1/p < 0: the per-cube functional diverges on small cubes
    c = cfg("thm11_flat").with_overrides(exponents={"q": {"kind": "constant", "value": 100.0}})
    assert refinement_growth(certify(c, "1.1")) > 1.1
    with pytest.raises(ConfigError, match="grows"):
        verify_theorem("1.1", c, trials=5)


def test_phi_triple_verify_runs_on_example_triples():
    for name in ("thm12_example1", "thm12_example2"):
        rep = verify_theorem("1.2", cfg(name), trials=10)
        assert rep.passed and np.isfinite(rep.kappa["thm12"])
