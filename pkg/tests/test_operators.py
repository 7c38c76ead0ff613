import math

import numpy as np
import pytest
from scipy.integrate import quad

from varlex.domain import Box, GridFunction, random_indicator_sum
from varlex.exceptions import DomainError
from varlex.operators import (AnnulusConstantKernel, BesselKernel, CallableKernel, FractionalKernel, apply_commutator,
                              check_class_D)

BOX = Box((0.5,), 0.5)
BOX2 = Box((0.5, 0.5), 0.5)


def spike(r):
    # mass only on a thin shell inside the annulus (8, 16]
    return 1.0 if 9.0 < r <= 9.01 else 0.0


def test_fractional_profiles_closed_form():
    K = FractionalKernel(0.5, n=1)
    t = np.array([0.1, 1.0, 3.0])
    np.testing.assert_allclose(K.k_tilde(t), 2 * t**0.5 / 0.5, rtol=1e-12)
    np.testing.assert_allclose(K.k_bar(t), t**-0.5, rtol=1e-12)
    K2 = FractionalKernel(1.0, n=2)
    np.testing.assert_allclose(K2.k_tilde(t), 2 * math.pi * t, rtol=1e-12)


@pytest.mark.parametrize("K", [FractionalKernel(0.5, n=1), FractionalKernel(1.0, n=2), AnnulusConstantKernel(0.5, n=1)])
def test_class_D_passes_for_admissible_kernels(K):
    rep = check_class_D(K, 1.0, 0.0)
    assert rep.pass_ and math.isfinite(rep.c_estimate) and len(rep.ratios) == 21


def test_class_D_spike_kernel_fails():
    K = CallableKernel(spike, n=1, breakpoints=(9.0, 9.01))
    rep = check_class_D(K, 0.125, 0.0)
    assert not rep.pass_ and rep.c_estimate == math.inf


def test_class_D_input_validation():
    with pytest.raises(DomainError):
        check_class_D(FractionalKernel(0.5), 0.0, 0.0)
    with pytest.raises(DomainError):
        check_class_D(FractionalKernel(0.5), 1.0, 1.0)


def test_bessel_kernel_integrates_to_gamma():
    K = BesselKernel(0.5, 1.0, n=1)
    assert float(K.primitive(np.array([60.0]))[0]) == pytest.approx(math.gamma(0.5), rel=1e-10)


def test_potential_of_constant_1d():
    K = FractionalKernel(0.5, n=1)
    f = GridFunction.constant(BOX, 64, 1.0)
    x = f.midpoints().reshape(-1)
    exact = (x**0.5 + (1 - x) ** 0.5) / 0.5
    np.testing.assert_allclose(apply_commutator(K, None, 0, f).values, exact, rtol=1e-11)


def _rect(a, b):
    # int_0^a int_0^b (x^2 + y^2)^(-1/2) dy dx
    return a * math.asinh(b / a) + b * math.asinh(a / b)


def test_potential_of_constant_2d():
    K = FractionalKernel(1.0, n=2)
    f = GridFunction.constant(BOX2, 16, 1.0)
    T = apply_commutator(K, None, 0, f).values
    pts = f.midpoints()
    for i, j in [(0, 0), (3, 7), (15, 8)]:
        x, y = pts[i, j]
        exact = _rect(x, y) + _rect(1 - x, y) + _rect(x, 1 - y) + _rect(1 - x, 1 - y)
        assert T[i, j] == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("m", [1, 2])
def test_commutator_against_direct_quadrature(m, rng):
    N, a = 16, 0.5
    K = FractionalKernel(a, n=1)
    f = random_indicator_sum(BOX, N, rng)
    b = GridFunction.sample(BOX, N, lambda x: np.sin(3 * x[..., 0]))
    h = 1.0 / N
    x = (np.arange(N) + 0.5) * h
    W = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            lo, hi = j * h, (j + 1) * h
            pts = [x[i]] if lo < x[i] < hi else None
            W[i, j] = quad(lambda y: abs(x[i] - y) ** (a - 1), lo, hi, points=pts, limit=200)[0]
    bv, fv = b.values, f.values
    ref = np.array([np.sum((bv[i] - bv) ** m * W[i] * fv) for i in range(N)])
    got, slack = apply_commutator(K, b, m, f, return_slack=True)
    np.testing.assert_allclose(got.values, ref, rtol=1e-8, atol=1e-10 * np.max(np.abs(ref)))
    assert np.all(slack >= 0)


def test_commutator_of_constant_symbol_vanishes(rng):
    f = random_indicator_sum(BOX2, 16, rng)
    b = GridFunction.constant(BOX2, 16, 3.0)
    out = apply_commutator(FractionalKernel(1.0, n=2), b, 2, f)
    assert np.max(np.abs(out.values)) == 0.0


def test_commutator_needs_symbol():
    f = GridFunction.constant(BOX, 8, 1.0)
    with pytest.raises(DomainError):
        apply_commutator(FractionalKernel(0.5), None, 1, f)
    with pytest.raises(DomainError):
        apply_commutator(FractionalKernel(0.5), None, -1, f)
