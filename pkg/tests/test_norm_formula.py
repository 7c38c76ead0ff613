import numpy as np
import pytest

from varlex.domain import Box, CubeLattice
from varlex.exceptions import DomainError
from varlex.exponents import ExponentField, Field
from varlex.norm_formula import sample_cubes, verify_lemma_chain, verify_norm_formula

BOX = Box((0.5,), 0.5)
LAT = CubeLattice(BOX, 0, 20)


def test_constant_exponents_give_unit_ratio():
    tab = verify_norm_formula(Field.constant(BOX, 2.0), None, LAT)
    np.testing.assert_allclose(tab.ratio, 1.0, rtol=1e-9)
    assert abs(tab.slope()) < 1e-9
    assert tab.octaves == pytest.approx(20)


def test_log_power_formula_is_flat():
    p = Field.affine(BOX, [0.4], 1.6, 1.6, 2.0)
    q = Field.loglog_smooth(BOX, 1.0, 0.5)
    tab = verify_norm_formula(p, q, LAT)
    lo, hi = tab.ratio_range
    assert len(tab.cubes) >= 100
    assert abs(tab.slope()) < 0.05 and 0.25 < lo <= hi < 4


def test_sample_cubes_cover_levels():
    cubes = sample_cubes(CubeLattice(BOX, 0, 6), per_level=4)
    assert {Q.level for Q in cubes} == set(range(7))


def test_csv_export_has_header():
    tab = verify_norm_formula(Field.constant(BOX, 3.0), Field.constant(BOX, 1.0), CubeLattice(BOX, 0, 4))
    text = tab.to_csv()
    assert text.splitlines()[0].count(",") >= 3


def test_lemma_chain_on_log_holder_exponent():
    p = ExponentField.promote(Field.affine(BOX, [0.5], 1.5, 1.5, 2.0))
    rep = verify_lemma_chain(p, None, CubeLattice(BOX, 0, 8))
    assert all(np.isfinite(v) and v >= 1.0 - 1e-12 for v in rep.maxima.values())
