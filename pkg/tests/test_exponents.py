import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varlex.domain import Box, Cube
from varlex.exceptions import ConfigError, DomainError
from varlex.exponents import (ExponentField, Field, combine, conjugate, delta_exponent, exponent_from_config,
                              regularity)

BOX = Box((0.5,), 0.5)


def test_affine_clamps_and_extremes():
    p = Field.affine(BOX, [2.0], 1.0, 1.5, 2.5)
    np.testing.assert_allclose(p(np.array([[0.0], [0.5], [1.0]])), [1.5, 2.0, 2.5])
    assert (p.minus, p.plus) == pytest.approx((1.5, 2.5))
    assert p.extremes(Cube((0.0,), 0.25)) == pytest.approx((1.5, 1.5), abs=1e-12)


def test_conjugate_swaps_extremes():
    p = ExponentField.promote(Field.affine(BOX, [1.0], 1.5, 1.5, 2.5))
    pc = conjugate(p)
    assert pc.minus == pytest.approx(2.5 / 1.5)
    assert pc.plus == pytest.approx(3.0)
    x = np.linspace(0, 1, 11)[:, None]
    np.testing.assert_allclose(1 / p(x) + 1 / pc(x), 1.0)


def test_conjugate_requires_p_minus_above_one():
    with pytest.raises(DomainError):
        conjugate(ExponentField.promote(Field.constant(BOX, 1.0)))


def test_combine_modes():
    p = Field.constant(BOX, 2.0)
    q = Field.constant(BOX, 4.0)
    x = np.array([[0.3]])
    assert combine(p, q, "difference")(x)[0] == pytest.approx(4.0)
    assert combine(p, q, "sum")(x)[0] == pytest.approx(4.0 / 3.0)
    assert combine(p, None, "scale", 3.0)(x)[0] == pytest.approx(6.0)
    assert combine(p, q, "product")(x)[0] == pytest.approx(8.0)
    with pytest.raises(DomainError):
        combine(q, p, "difference")
    with pytest.raises(DomainError):
        combine(p, q, "nope")


def test_delta_exponent_range_checks():
    r = ExponentField.promote(Field.affine(BOX, [1.0], 2.0, 2.0, 3.0))
    d = delta_exponent(1.6, r)
    x = np.array([[0.0], [1.0]])
    np.testing.assert_allclose(d(x), [1 / 1.6 - 1 / 2.0, 1 / 1.6 - 1 / 3.0])
    with pytest.raises(DomainError):
        delta_exponent(1.0, r)
    with pytest.raises(DomainError):
        delta_exponent(2.5, r)


def test_logholder_constant_of_constant_field_is_zero():
    rep = regularity(Field.constant(BOX, 2.0))
    assert rep.local_logholder_constant == 0.0 and rep.loglog_constant == 0.0


def test_log_smooth_has_finite_logholder_constant():
    p = Field.log_smooth(BOX, 2.0, 0.2)
    rep = regularity(p, pair_budget=5000)
    # |1/p(x) - 1/p(y)| log(e + 1/|x-y|) stays bounded near the center
    assert 0 < rep.local_logholder_constant < 1.0


def test_loglog_field_is_loglog_regular_but_not_logholder():
    p = Field.loglog_smooth(BOX, 1.0, 0.5)
    rep = regularity(p, pair_budget=5000)
    assert rep.loglog_constant < 2.0
    assert rep.local_logholder_constant > rep.loglog_constant


def test_tabulated_field_uses_cell_values():
    p = Field.tabulated(BOX, [1.5, 2.0, 2.5, 3.0])
    np.testing.assert_allclose(p(np.array([[0.1], [0.3], [0.6], [0.9]])), [1.5, 2.0, 2.5, 3.0])


def test_config_tables():
    p = exponent_from_config({"kind": "affine", "slope": [0.5], "intercept": 1.5, "lo": 1.5, "hi": 2.0}, BOX)
    assert isinstance(p, ExponentField)
    with pytest.raises(ConfigError):
        exponent_from_config({"kind": "affine", "slope": [0.5]}, BOX)
    with pytest.raises(ConfigError):
        exponent_from_config({"kind": "spline"}, BOX)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(1.05, 6.0), b=st.floats(1.05, 6.0))
def test_conjugate_is_an_involution(a, b):
    lo, hi = min(a, b), max(a, b)
    p = ExponentField.promote(Field.affine(BOX, [hi - lo], lo, lo, hi))
    x = np.linspace(0, 1, 17)[:, None]
    np.testing.assert_allclose(conjugate(conjugate(p))(x), p(x), rtol=1e-12)
    assert conjugate(conjugate(p)).minus == pytest.approx(p.minus)
