import json

import numpy as np
import pytest

from varlex.domain import Box, GridFunction
from varlex.harness.cli import cli_main, write_calibration


def run(capsys, *argv):
    code = cli_main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_kernel_passes(capsys):
    code, out, _ = run(capsys, "check-kernel", "--config", "thm11_flat")
    assert code == 0 and json.loads(out)["pass"] is True


def test_certify_csv(capsys):
    code, out, _ = run(capsys, "certify", "--config", "thm11_flat", "--format", "csv")
    rows = out.splitlines()
    assert code == 0 and rows[0].startswith("cube,level")
    vals = [float(r.split(",")[-1]) for r in rows[1:]]
    assert max(vals) / min(vals) < 1 + 1e-9


def test_verify_writes_files(tmp_path, capsys):
    code, _, err = run(capsys, "verify", "1.1", "--config", "thm11_flat", "--trials", "10", "--out", str(tmp_path))
    assert code == 0 and "pass" in err
    rep = json.loads((tmp_path / "verify_1.1_thm11_flat.json").read_text())
    assert rep["measured"]["trials"] == 10
    assert GridFunction.from_csv(tmp_path / "verify_1.1_thm11_flat_worst_f.csv").cells_per_side == 1024


def test_suite_subset_csv(capsys):
    code, out, _ = run(capsys, "suite", "--config", "thm11_flat", "--only", "closed_form", "kernel", "--format", "csv")
    assert code == 0 and len(out.splitlines()) == 3


def test_formula_and_sparse(capsys):
    code, out, _ = run(capsys, "formula", "--config", "default")
    assert code == 0 and json.loads(out)["cubes"] >= 100
    code, out, _ = run(capsys, "sparse", "--config", "default", "--seed", "4")
    fam = json.loads(out)
    assert code == 0 and all(v for k, v in fam["checks"].items() if isinstance(v, bool))


def test_norm_from_file(tmp_path, capsys):
    box = Box((0.5,), 0.5)
    GridFunction.constant(box, 512, 3.0).to_csv(tmp_path / "f.csv")
    code, out, _ = run(capsys, "norm", "--config", "thm11_flat", "--grid", str(tmp_path / "f.csv"))
    assert code == 0 and json.loads(out)["value"] == pytest.approx(3.0, rel=1e-9)


def test_bad_config_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "bad"\n[exponents.p]\nkind = "constant"\nvalue = 1.0\n')
    code, out, err = run(capsys, "suite", "--config", str(bad))
    assert code == 2 and out == "" and "1 < p^-" in err


def test_missing_config_exits_two(capsys):
    code, _, err = run(capsys, "verify", "1.1", "--config", "no_such_config.toml")
    assert code == 2


def test_failed_check_exits_one(tmp_path, capsys):
    cfg = tmp_path / "tight.toml"
    cfg.write_text('name = "tight"\n[domain]\ngrid_depth = 6\nlevels = [0, 5]\n'
                   '[exponents.p]\nkind = "constant"\nvalue = 2.0\n'
                   '[calibration]\nC_p = 0.5\n')
    code, out, _ = run(capsys, "suite", "--config", str(cfg), "--only", "indicator_product")
    assert code == 1 and json.loads(out)["pass"] is False


def test_calibration_writer(tmp_path):
    text = write_calibration({"x": {"C_p": 1.26, "alpha_stopping": 2.0}}, tmp_path / "c.toml", (1, 2), 1.25, 1.5)
    assert "[x]\nC_p = 1.26\nalpha_stopping = 2.0\n" in text
    assert (tmp_path / "c.toml").read_text() == text
