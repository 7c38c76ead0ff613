import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varlex.domain import Box, CubeLattice, GridFunction, random_indicator_sum
from varlex.exceptions import DomainError
from varlex.exponents import ExponentField, Field
from varlex.operators import FractionalKernel, apply_commutator
from varlex.sparse import (build_stopping_family, dyadic_majorant, local_sum_bound_check, proof_exponents,
                           stopping_constants, stopping_functional)
from varlex.symbols import power_symbol

BOX = Box((0.5,), 0.5)
BOX2 = Box((0.5, 0.5), 0.5)
LAT = CubeLattice(BOX, 0, 7)


def _exps():
    p = ExponentField.promote(Field.constant(BOX, 2.0))
    q = ExponentField.promote(Field.constant(BOX, 4.0))
    return proof_exponents(p, q, 2.0, 2.0)


def test_proof_exponents_midpoints():
    pe = _exps()
    # s = 2 p' = 4, s' = 4/3; l = 8, l' = 8/7; (q+)' = 4/3
    assert pe.mu_range == pytest.approx((4 / 3, 2.0))
    assert pe.nu_range == pytest.approx((8 / 7, 4 / 3))
    assert pe.mu == pytest.approx(5 / 3)
    assert 1 / pe.omega.minus == pytest.approx(1 / 4 + 1 / pe.mu)
    with pytest.raises(DomainError):
        proof_exponents(pe.s, pe.l, 2.0, 2.0, mu=10.0)


@pytest.mark.parametrize("box,N,alpha", [(BOX, 256, 0.5), (BOX2, 32, 1.0)])
@pytest.mark.parametrize("m", [0, 1, 2])
def test_majorant_dominates_commutator(box, N, alpha, m, rng):
    K = FractionalKernel(alpha, n=box.n)
    for _ in range(3):
        f = random_indicator_sum(box, N, rng)
        c = np.asarray(box.lo) + rng.uniform(0.1, 0.9, size=box.n)
        b = power_symbol(box, N, [c], [0.5], [1.0]) if m else None
        T, slack = apply_commutator(K, b, m, f, return_slack=True)
        M = dyadic_majorant(K, b, m, f)
        assert np.all(np.abs(T.values) <= M.values + slack)


def test_majorant_m0_ignores_symbol(rng):
    K = FractionalKernel(0.5)
    f = random_indicator_sum(BOX, 64, rng)
    b = power_symbol(BOX, 64, [[0.3]], [0.5], [1.0])
    np.testing.assert_array_equal(dyadic_majorant(K, b, 0, f).values, dyadic_majorant(K, None, 0, f).values)


def test_majorant_rejects_negative_f():
    with pytest.raises(DomainError):
        dyadic_majorant(FractionalKernel(0.5), None, 0, GridFunction.constant(BOX, 8, -1.0))


def test_local_sum_bound(rng):
    pe = _exps()
    Q0 = LAT.level_cubes(2)[1]
    f = random_indicator_sum(BOX, 128, rng, support=Q0)
    lhs, rhs = local_sum_bound_check(FractionalKernel(0.5), f, pe.omega, Q0, LAT)
    assert 0 < lhs and np.isfinite(rhs) and lhs / rhs < 10


def test_constant_field_gives_single_class():
    pe = _exps()
    G = stopping_functional(pe.tau, GridFunction.constant(BOX, 128, 1.5), LAT)
    for v in G.values():
        np.testing.assert_allclose(v, 1.5, rtol=1e-9)
    fam = build_stopping_family(G, 2.0, LAT)
    assert fam.passed
    assert fam.k_range[0] == fam.k_range[1]


def test_stopping_constants_give_alpha_above_one():
    pe = _exps()
    sc = stopping_constants(pe.tau, LAT, trials=4)
    assert sc.G_tau >= 1.0 and sc.alpha() > 1.0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(1.9, 4.0))
def test_stopping_family_invariants(seed, alpha):
    rng = np.random.default_rng(seed)
    pe = _exps()
    g = random_indicator_sum(BOX, 128, rng)
    fam = build_stopping_family(stopping_functional(pe.tau, g, LAT), alpha, LAT)
    assert fam.checks["F_disjoint"] and fam.checks["fixed_k_disjoint"] and fam.checks["classes_nested"]
    assert fam.Pi < alpha
    r = fam.Pi / alpha
    d = fam.to_dict()
    for lv in d["levels"]:
        for c in lv["cubes"]:
            # measure bound through the residual sets, and the G sandwich
            assert c["measure"] < c["residual"] / (1 - r)
            assert lv["threshold"] < c["G"]
