import math

import pytest

from varlex.exceptions import ConfigError
from varlex.harness.config import (ExperimentConfig, config_from_dict, load_calibration, load_config,
                                   packaged_config)

PACKAGED = ["default", "thm11_flat", "fractional", "thm11_lipschitz", "thm11_variable", "thm12_example1",
            "thm12_example2", "constant"]


def _base(**over):
    raw = {"name": "t", "domain": {"n": 1, "grid_depth": 6, "levels": [0, 5]},
           "exponents": {"p": {"kind": "constant", "value": 2.0}, "q": {"kind": "constant", "value": 4.0}},
           "kernel": {"kind": "fractional", "alpha": 0.25}}
    for k, v in over.items():
        raw[k] = {**raw.get(k, {}), **v} if isinstance(v, dict) else v
    return raw


@pytest.mark.parametrize("name", PACKAGED)
def test_packaged_configs_load(name):
    cfg = load_config(packaged_config(name))
    assert isinstance(cfg, ExperimentConfig) and cfg.name == name
    assert cfg.cells_per_side == 2**cfg.grid_depth


def test_defaults_and_thresholds():
    cfg = config_from_dict(_base())
    assert cfg.seed == 0 and cfg.m == 0
    # default R and S are twice their admissibility thresholds
    assert cfg.theorem["R"] == pytest.approx(2.0) and cfg.theorem["S"] == pytest.approx(2.0)
    assert cfg.trials["verify"] == 200


@pytest.mark.parametrize("over,needle", [
    ({"domain": {"n": 3}}, "dimension"),
    ({"domain": {"grid_depth": 13}}, "grid depth"),
    ({"domain": {"levels": [0, 12]}}, "at most 12 levels"),
    ({"exponents": {"p": {"kind": "constant", "value": 1.0}}}, "1 < p^-"),
    ({"exponents": {"p": {"kind": "constant", "value": 2.0}, "q": {"kind": "constant", "value": 1.5}}},
     "p(x) <= q(x)"),
    ({"kernel": {"kind": "fractional", "alpha": 0.25, "eps": 1.0}}, "eps < 1"),
    ({"theorem": {"R": 1.0}}, "R >"),
    ({"theorem": {"S": 0.5}}, "S >"),
    ({"theorem": {"m": -1}}, "commutator order"),
    ({"symbol": {"functional": "power", "delta": 1.5}}, "0 < delta <= 1"),
    ({"symbol": {"functional": "variable"}}, "needs [exponents.r]"),
    ({"verification": {"alpha": 0.5}}, "alpha > 1"),
    ({"trials": {"verify": 0}}, "positive integer"),
    ({"weights": {"kind": "power", "gamma_v": 2.0, "gamma_w": 0.0}}, "gamma_v"),
])
def test_violations_name_the_inequality(over, needle):
    with pytest.raises(ConfigError, match=None) as exc:
        config_from_dict(_base(**over))
    assert needle in str(exc.value)


def test_with_overrides_revalidates():
    cfg = config_from_dict(_base())
    assert cfg.with_overrides(theorem={"m": 1}).m == 1
    with pytest.raises(ConfigError):
        cfg.with_overrides(theorem={"R": 0.5})


def test_calibration_lookup_order(tmp_path, monkeypatch):
    path = tmp_path / "cal.toml"
    path.write_text('[t]\nC_p = 1.5\n\n[other]\nC_p = 9.0\n')
    monkeypatch.setenv("VARLEX_DEFAULTS", str(path))
    cfg = config_from_dict(_base())
    assert cfg.constant("C_p", math.inf) == 1.5
    assert cfg.constant("C_missing", math.inf) == math.inf
    assert config_from_dict(_base(calibration={"section": "other"})).constant("C_p", 0.0) == 9.0
    assert config_from_dict(_base(calibration={"C_p": 2.5})).constant("C_p", 0.0) == 2.5


def test_packaged_calibration_has_every_config():
    cal = load_calibration()
    for name in PACKAGED:
        assert "C_p" in cal[name]
    for name in ("thm11_flat", "thm11_lipschitz", "thm11_variable"):
        assert cal[name]["verify_bound_11"] > 0
