import numpy as np
import pytest

from varlex.domain import Box, Cube, CubeLattice, GridFunction
from varlex.exponents import ExponentField, Field, delta_exponent
from varlex.symbols import (CubeFunctional, lipschitz_seminorm, nested_average_gap, oscillation_norm_ratio,
                            power_symbol, seminorm_equivalence_check, t_infinity, variable_lipschitz_pointwise_check)

BOX = Box((0.5,), 0.5)


def test_linear_symbol_seminorm_is_one_quarter():
    # mean |x - x_Q| over Q is side/4 for every cube holding an even number of cells
    b = GridFunction.sample(BOX, 64, lambda x: x[..., 0])
    rep = lipschitz_seminorm(b, CubeFunctional.power(1.0), 1.0, CubeLattice(BOX, 0, 5))
    assert rep.seminorm == pytest.approx(0.25, rel=1e-12)


def test_functional_values():
    cubes = [Cube((0.0,), 0.25), Cube((0.5,), 0.5)]
    np.testing.assert_allclose(CubeFunctional.one().values(cubes), [1, 1])
    np.testing.assert_allclose(CubeFunctional.power(0.5).values(cubes), [0.5, 0.5**0.5])


def test_t_infinity_of_power_functional_is_one():
    assert t_infinity(CubeFunctional.power(0.3), CubeLattice(BOX, 0, 6)) == pytest.approx(1.0)


def test_power_symbol_is_lipschitz_of_its_order():
    lat = CubeLattice(BOX, 0, 7)
    b = power_symbol(BOX, 128, [[0.37]], [0.25], [1.0])
    coarse = lipschitz_seminorm(b, CubeFunctional.power(0.25), 1.0, CubeLattice(BOX, 0, 5)).seminorm
    fine = lipschitz_seminorm(b, CubeFunctional.power(0.25), 1.0, lat).seminorm
    assert 0 < coarse <= fine < 2 * coarse


def test_seminorm_equivalence_orders():
    b = power_symbol(BOX, 128, [[0.37]], [0.25], [1.0])
    s_rho, s_one = seminorm_equivalence_check(b, CubeFunctional.power(0.25), 2.0, CubeLattice(BOX, 0, 6))
    assert s_one <= s_rho < 3 * s_one


def test_nested_average_gap_of_linear_symbol():
    b = GridFunction.sample(BOX, 64, lambda x: x[..., 0])
    # 3Q is centred on Q, so averages of a linear symbol agree
    assert nested_average_gap(b, None, Cube((0.25,), 0.25)) == pytest.approx(0.0, abs=1e-14)


def test_oscillation_ratio_positive():
    b = GridFunction.sample(BOX, 64, lambda x: x[..., 0])
    r = oscillation_norm_ratio(b, Field.constant(BOX, 2.0), 1, Cube((0.0,), 0.5))
    # (mean |x - 1/4|^2 over [0, 1/2))^(1/2) / ... is a fixed positive number
    assert 0 < r < 1


def test_variable_lipschitz_check_is_finite():
    r = ExponentField.promote(Field.affine(BOX, [1.0], 2.0, 2.0, 3.0))
    delta = delta_exponent(1.6, r)
    b = GridFunction.sample(BOX, 128, lambda x: np.abs(x[..., 0] - 0.4) ** 0.3)
    c1, c2 = variable_lipschitz_pointwise_check(b, delta, 500, CubeLattice(BOX, 0, 7))
    assert np.isfinite(c1) and np.isfinite(c2) and c1 > 0
