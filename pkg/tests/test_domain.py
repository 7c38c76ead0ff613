import numpy as np
import pytest

from varlex.domain import (Box, Cube, CubeLattice, GridFunction, average, enumerate_cubes, integrate,
                           random_indicator_sum, restrict)
from varlex.exceptions import DomainError


def test_box_bounds_and_validation():
    b = Box.from_bounds(-1.0, 3.0, n=2)
    assert b.side == 4.0 and b.volume == 16.0
    np.testing.assert_allclose(b.lo, [-1, -1])
    with pytest.raises(DomainError):
        Box((0.0, 0.0, 0.0), 1.0)
    with pytest.raises(DomainError):
        Box((0.0,), -1.0)


def test_dyadic_parent_children_roundtrip(unit2):
    lat = CubeLattice(unit2, 0, 3)
    for Q in lat.level_cubes(2):
        kids = Q.children()
        assert len(kids) == 4
        assert all(k.parent() == Q for k in kids)
        assert sum(k.measure for k in kids) == pytest.approx(Q.measure)


def test_enumeration_order_and_count(unit1):
    lat = CubeLattice(unit1, 0, 4)
    cubes = enumerate_cubes(lat)
    assert len(cubes) == 1 + 2 + 4 + 8 + 16 == lat.count()
    keys = [(Q.level, Q.index) for Q in cubes]
    assert keys == sorted(keys)


def test_negative_levels_anchor_at_lower_corner(unit1):
    lat = CubeLattice(unit1, -2, 0)
    big = lat.level_cubes(-2)[0]
    assert big.side == 4.0 and big.lo == (0.0,)
    assert big.intersection_measure(unit1) == pytest.approx(1.0)


def test_shifted_cubes_are_seeded(unit1):
    a = CubeLattice(unit1, 0, 5, shifted_per_level=3, seed=7).shifted_cubes(3)
    b = CubeLattice(unit1, 0, 5, shifted_per_level=3, seed=7).shifted_cubes(3)
    assert a == b and all(Q.shifted for Q in a)


def test_integrals_of_indicators_are_exact(unit2):
    Q = Cube((0.25, 0.5), 0.25)
    f = GridFunction.indicator(unit2, 16, Q)
    assert integrate(f) == pytest.approx(Q.measure, rel=1e-14)
    assert average(f, Q) == pytest.approx(1.0)
    assert integrate(f, Cube((0.0, 0.0), 0.5)) == 0.0


def test_partial_overlap_integration(unit1):
    # cube covering half of a cell contributes half the cell value
    f = GridFunction.constant(unit1, 4, 2.0)
    assert integrate(f, Cube((0.125,), 0.25)) == pytest.approx(0.5)


def test_restrict_returns_values_in_region(unit1):
    f = GridFunction.sample(unit1, 8, lambda x: x[..., 0])
    vals = restrict(f, Cube((0.0,), 0.5))
    flat = np.ravel(vals[0] if isinstance(vals, tuple) else vals)
    assert np.all(flat < 0.5)


def test_csv_and_binary_roundtrip(tmp_path, unit2, rng):
    f = random_indicator_sum(unit2, 8, rng)
    f.to_csv(tmp_path / "f.csv")
    g = GridFunction.from_csv(tmp_path / "f.csv")
    assert g.box == f.box and np.array_equal(g.values, f.values)
    f.to_binary(tmp_path / "f.bin")
    h = GridFunction.from_binary(tmp_path / "f.bin")
    assert np.array_equal(h.values, f.values)


def test_grid_rejects_non_power_of_two(unit1):
    with pytest.raises(DomainError):
        GridFunction(unit1, np.ones(6))


def test_random_indicator_sum_respects_support(unit1, rng):
    S = Cube((0.25,), 0.25)
    for _ in range(20):
        f = random_indicator_sum(unit1, 64, rng, support=S)
        x = f.midpoints().reshape(-1)
        assert np.all(f.values.reshape(-1)[(x < 0.25) | (x >= 0.5)] == 0)
        assert np.all(f.values >= 0)
