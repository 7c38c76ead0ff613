import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varlex.conditions import (WeightPair, check_condition_F, fefferman_phong_thm11, fefferman_phong_thm12,
                               power_weight)
from varlex.domain import Box, CubeLattice
from varlex.exceptions import DomainError
from varlex.exponents import ExponentField, Field, combine, conjugate
from varlex.gphi import GPhiFunction, PhiTriple, build_example_triple
from varlex.operators import FractionalKernel
from varlex.symbols import CubeFunctional

BOX = Box((0.5,), 0.5)


def _pq(p, q):
    return ExponentField.promote(Field.constant(BOX, p)), ExponentField.promote(Field.constant(BOX, q))


def test_flat_functional_matches_closed_form():
    # 1/q = 1/p - alpha: Ktilde(l) = 2 l^alpha / alpha and ||chi_Q||_q / ||chi_Q||_p = l^(1/q - 1/p) cancel
    p, q = _pq(2.0, 4.0)
    rep = fefferman_phong_thm11(p, q, 4.0, 2.0, CubeFunctional.one(), 0, FractionalKernel(0.25),
                                WeightPair.unit(BOX, 512), CubeLattice(BOX, 0, 9))
    np.testing.assert_allclose(rep.table["functional"], 8.0, rtol=1e-9)
    assert rep.flatness() == pytest.approx(1.0, abs=1e-9)


def test_equal_exponents_grow_with_cube_size():
    p, q = _pq(2.0, 2.0)
    rep = fefferman_phong_thm11(p, q, 4.0, 2.0, CubeFunctional.one(), 0, FractionalKernel(0.25),
                                WeightPair.unit(BOX, 256), CubeLattice(BOX, 0, 8))
    prof = list(rep.level_profile().values())
    assert all(a > b for a, b in zip(prof, prof[1:]))


def test_admissibility_checks():
    p, q = _pq(2.0, 4.0)
    K, W, L = FractionalKernel(0.25), WeightPair.unit(BOX, 64), CubeLattice(BOX, 0, 4)
    with pytest.raises(DomainError):
        fefferman_phong_thm11(p, q, 1.0, 2.0, CubeFunctional.one(), 0, K, W, L)
    with pytest.raises(DomainError):
        fefferman_phong_thm11(q, p, 4.0, 2.0, CubeFunctional.one(), 0, K, W, L)


@settings(max_examples=10, deadline=None)
@given(cv=st.integers(-3, 3), cw=st.integers(-3, 3))
def test_weight_scaling_covariance(cv, cw):
    p, q = _pq(1.5, 3.0)
    K, L = FractionalKernel(0.5), CubeLattice(BOX, 0, 6)
    W = WeightPair(power_weight(BOX, 64, 0.1, [0.41]), power_weight(BOX, 64, 0.2, [0.41]))
    base = fefferman_phong_thm11(p, q, 6.0, 2.0, CubeFunctional.one(), 0, K, W, L).kappa
    sc = fefferman_phong_thm11(p, q, 6.0, 2.0, CubeFunctional.one(), 0, K, W.scaled(2.0**cv, 2.0**cw), L).kappa
    assert sc == pytest.approx(base * 2.0 ** (cw - cv), rel=1e-12)


@settings(max_examples=8, deadline=None)
@given(top=st.integers(1, 7))
def test_kappa_monotone_under_refinement(top):
    p = ExponentField.promote(Field.affine(BOX, [0.5], 1.5, 1.5, 2.0))
    q = ExponentField.promote(Field.constant(BOX, 3.0))
    W = WeightPair(power_weight(BOX, 256, 0.1, [0.41]), power_weight(BOX, 256, 0.1, [0.41]))
    k = [fefferman_phong_thm11(p, q, 8.0, 2.0, CubeFunctional.one(), 0, FractionalKernel(0.5), W,
                               CubeLattice(BOX, 0, j)).kappa for j in (top, top + 1)]
    assert k[1] >= k[0]


@settings(max_examples=8, deadline=None)
@given(delta=st.floats(0.05, 1.0))
def test_order_zero_ignores_functional(delta):
    p, q = _pq(2.0, 4.0)
    args = (FractionalKernel(0.25), WeightPair.unit(BOX, 64), CubeLattice(BOX, 0, 5))
    a = fefferman_phong_thm11(p, q, 4.0, 2.0, CubeFunctional.power(delta), 0, *args)
    b = fefferman_phong_thm11(p, q, 4.0, 2.0, CubeFunctional.one(), 0, *args)
    np.testing.assert_array_equal(a.table["functional"], b.table["functional"])


def test_power_triple_agrees_with_power_condition():
    p = ExponentField.promote(Field.affine(BOX, [1.0], 1.5, 1.5, 2.5))
    q = ExponentField.promote(Field.affine(BOX, [1.0], 3.0, 3.0, 4.0))
    K, W, L = FractionalKernel(0.5), WeightPair(power_weight(BOX, 128, 0.1, [0.3]), WeightPair.unit(BOX, 128).w), \
        CubeLattice(BOX, 0, 7)
    t11 = fefferman_phong_thm11(p, q, 6.0, 3.0, CubeFunctional.one(), 0, K, W, L)
    s = ExponentField.promote(combine(conjugate(p), None, "scale", 6.0))
    l = ExponentField.promote(combine(q, None, "scale", 3.0))
    t12 = fefferman_phong_thm12(p, q, None, 0, K, GPhiFunction.power(s), GPhiFunction.power(l), W, L)
    np.testing.assert_allclose(t12.table["functional"], t11.table["functional"], rtol=1e-8)


def test_condition_F_examples_and_control():
    p = ExponentField.promote(Field.affine(BOX, [1.0], 1.5, 1.5, 2.5))
    lat = CubeLattice(BOX, 0, 6)
    ex1, _ = build_example_triple(1, p, 3.0)
    assert check_condition_F(ex1, lat).passed
    ex2, _ = build_example_triple(2, p, 3.0, mu=Field.constant(BOX, 20.0), eps=0.05)
    assert check_condition_F(ex2, lat).passed
    t2 = GPhiFunction.power(Field.constant(BOX, 2.0))
    bad = check_condition_F(PhiTriple(t2, t2, t2), lat)
    assert not bad.item_passed("ii")
    assert math.isfinite(bad.bounds["i"])
