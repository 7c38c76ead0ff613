import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from varlex.domain import Box, Cube, CubeLattice, GridFunction, random_indicator_sum
from varlex.exponents import ExponentField, Field
from varlex.gphi import GPhiFunction
from varlex.spaces import (disjoint_sum_ratio, doubling_ratio, duality_lower_bound, holder_ratio, indicator_norm,
                           indicator_norms, indicator_product_ratio, luxemburg_norm, modular, weighted_norm)

BOX = Box((0.5,), 0.5)
BOX2 = Box((0.5, 0.5), 0.5)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_indicator_closed_form(p):
    for Q in [Cube((0.0,), 1.0), Cube((0.25,), 0.125), Cube((0.5,), 2.0**-18)]:
        assert indicator_norm(Field.constant(BOX, p), Q).value == pytest.approx(Q.measure ** (1 / p), rel=1e-9)


def test_constant_exponent_norm_is_lp_norm(rng):
    f = random_indicator_sum(BOX, 64, rng)
    lp = (np.sum(f.values**3) / 64) ** (1 / 3)
    assert luxemburg_norm(Field.constant(BOX, 3.0), f).value == pytest.approx(lp, rel=1e-9)


def test_two_valued_exponent_against_root_finder():
    # p = 1.5 on the left half, 3 on the right; f = 2 on the left, 0.5 on the right
    p = Field.tabulated(BOX, [1.5, 3.0])
    f = GridFunction(BOX, np.repeat([2.0, 0.5], 8))
    lam = brentq(lambda l: 0.5 * (2 / l) ** 1.5 + 0.5 * (0.5 / l) ** 3 - 1.0, 1e-3, 1e3, xtol=1e-15)
    assert luxemburg_norm(p, f).value == pytest.approx(lam, rel=1e-9)


def test_log_modular_against_root_finder():
    phi = GPhiFunction(Field.constant(BOX, 2.0), Field.constant(BOX, 1.0))
    f = GridFunction.constant(BOX, 8, 3.0)
    lam = brentq(lambda l: (3 / l) ** 2 * math.log(math.e + 3 / l) - 1.0, 1e-3, 1e3, xtol=1e-15)
    res = luxemburg_norm(phi, f)
    assert res.value == pytest.approx(lam, rel=1e-9)
    assert modular(phi, f * (1 / res.value)) == pytest.approx(1.0, abs=1e-6)


def test_zero_function_has_zero_norm():
    assert luxemburg_norm(Field.constant(BOX, 2.0), GridFunction.constant(BOX, 8, 0.0)).value == 0.0


def test_weighted_norm_multiplies():
    f = GridFunction.constant(BOX, 8, 1.0)
    w = GridFunction.constant(BOX, 8, 5.0)
    assert weighted_norm(Field.constant(BOX, 2.0), f, w).value == pytest.approx(5.0)


def test_batched_indicator_norms_match_single():
    p = Field.affine(BOX2, [0.5, 0.25], 1.5, 1.5, 2.5)
    cubes = CubeLattice(BOX2, 0, 2).level_cubes(2)
    batch = indicator_norms(p, cubes)
    single = [indicator_norm(p, Q).value for Q in cubes]
    np.testing.assert_allclose(batch, single, rtol=1e-12)


def test_indicator_product_and_doubling_are_moderate():
    p = Field.affine(BOX, [1.0], 1.5, 1.5, 2.5)
    for Q in CubeLattice(BOX, 0, 6).level_cubes(6)[::7]:
        assert 0.5 < indicator_product_ratio(p, Q) < 2.0
        d = doubling_ratio(p, Q)
        assert d is None or 1.0 <= d < 3.0


def test_holder_and_duality_bounds(rng):
    phi = GPhiFunction(Field.affine(BOX, [0.5], 1.5, 1.5, 2.0), Field.constant(BOX, 0.5))
    for _ in range(5):
        f = random_indicator_sum(BOX, 32, rng)
        g = random_indicator_sum(BOX, 32, rng)
        assert holder_ratio(phi, f, g) <= 2.0
        r = duality_lower_bound(phi, f, 12, rng) / luxemburg_norm(phi, f).value
        assert 0.25 <= r <= 2.0


def test_disjoint_sum_ratio_constant_exponent_is_at_most_one(rng):
    p = Field.constant(BOX, 2.0)
    f = random_indicator_sum(BOX, 64, rng)
    g = random_indicator_sum(BOX, 64, rng)
    cubes = CubeLattice(BOX, 0, 3).level_cubes(3)
    # for constant p the local Hoelder sum is bounded by the global product (Cauchy-Schwarz)
    assert disjoint_sum_ratio(p, f, g, cubes) <= 1.0 + 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
def test_norm_is_homogeneous_and_subadditive(seed, c):
    rng = np.random.default_rng(seed)
    phi = GPhiFunction(Field.affine(BOX, [1.0], 1.5, 1.5, 2.5), Field.constant(BOX, 0.5))
    f = random_indicator_sum(BOX, 32, rng)
    g = random_indicator_sum(BOX, 32, rng)
    nf = luxemburg_norm(phi, f).value
    assert luxemburg_norm(phi, f * c).value == pytest.approx(c * nf, rel=1e-8)
    assert luxemburg_norm(phi, f + g).value <= nf + luxemburg_norm(phi, g).value + 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_norm_is_monotone_in_modulus(seed):
    rng = np.random.default_rng(seed)
    p = Field.affine(BOX, [1.0], 1.5, 1.5, 2.5)
    f = random_indicator_sum(BOX, 32, rng)
    g = f + random_indicator_sum(BOX, 32, rng)
    assert luxemburg_norm(p, f).value <= luxemburg_norm(p, g).value + 1e-12
