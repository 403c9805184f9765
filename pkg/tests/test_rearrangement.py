import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaprobin.fem import ScalarField
from plaprobin.geometry import mesh_polygon, unit_square
from plaprobin.rearrangement import (LorentzIndex, MonotoneProfile, StepFunction, decreasing_rearrangement,
                                     distribution_function, hardy_littlewood_check, lorentz_norm,
                                     schwarz_profile)

TWO_LEVEL = StepFunction([2.0, 1.0], [1.0, 1.0])


def step_functions(min_size=1, max_size=10):
    pair = st.tuples(st.floats(-5.0, 5.0, allow_nan=False), st.floats(0.05, 2.0))
    return st.lists(pair, min_size=min_size, max_size=max_size).map(
        lambda cells: StepFunction([v for v, _ in cells], [w for _, w in cells]))


def as_step(profile: MonotoneProfile) -> StepFunction:
    widths = np.diff(profile.breakpoints)
    return StepFunction(profile.values, widths)


def test_two_level_distribution():
    mu = distribution_function(TWO_LEVEL)
    assert mu([0.0, 0.5, 0.999, 1.0, 1.5, 1.999, 2.0, 3.0]).tolist() == [2, 2, 2, 1, 1, 1, 0, 0]


def test_constant_distribution():
    mu = distribution_function(StepFunction([3.0], [2.5]))
    assert mu([0.0, 2.9, 3.0]).tolist() == [2.5, 2.5, 0.0]


def test_two_level_rearrangement():
    ustar = decreasing_rearrangement(distribution_function(TWO_LEVEL))
    assert ustar([0.0, 0.5, 1.0, 1.5, 2.0]).tolist() == [2, 2, 1, 1, 0]


def test_constant_rearrangement():
    ustar = decreasing_rearrangement(distribution_function(StepFunction([0.7], [3.0])))
    assert ustar([0.0, 2.99]).tolist() == [0.7, 0.7]
    assert ustar.support_end == pytest.approx(3.0)


def test_schwarz_profile_constant_and_two_level():
    const = schwarz_profile(decreasing_rearrangement(distribution_function(StepFunction([1.5], [math.pi]))), 2)
    assert const.radius == pytest.approx(1.0)
    assert const([0.0, 0.5, 0.99]).tolist() == [1.5, 1.5, 1.5]
    two = schwarz_profile(decreasing_rearrangement(distribution_function(TWO_LEVEL)), 2)
    inner = 1 / math.sqrt(math.pi)
    assert two([0.0, 0.99 * inner]).tolist() == [2.0, 2.0]
    assert two(1.01 * inner) == 1.0


def test_two_ball_source_rearrangement():
    r = 0.3
    f = StepFunction([1.0, 0.0], [math.pi, math.pi * r * r])
    fstar = decreasing_rearrangement(distribution_function(f))
    assert fstar([0.0, math.pi * 0.999, math.pi * 1.001]).tolist() == [1.0, 1.0, 0.0]


@pytest.mark.parametrize("field,idx,expected", [
    (StepFunction([2.0], [1.0]), LorentzIndex(2, 2), 2.0),
    (TWO_LEVEL, LorentzIndex(1, 1), 3.0),
    (TWO_LEVEL, LorentzIndex(2, 1), 2 * (math.sqrt(2) + 1)),
])
def test_lorentz_examples(field, idx, expected):
    assert lorentz_norm(distribution_function(field), idx) == pytest.approx(expected, rel=1e-14)


def test_lorentz_rejects_bad_index():
    with pytest.raises(ValueError):
        LorentzIndex(0.0, 1.0)


def test_p1_distribution_exact_for_linear_field():
    mesh = mesh_polygon(unit_square(), 0.25)
    u = ScalarField.interpolate(mesh, lambda x, y: x)
    mu = distribution_function(u)
    t = np.linspace(0.0, 0.999, 37)
    assert np.max(np.abs(mu(t) - (1 - t))) <= 1e-13


def test_p1_distribution_of_signed_field():
    mesh = mesh_polygon(unit_square(), 0.25)
    u = ScalarField.interpolate(mesh, lambda x, y: 2 * x - 1)
    mu = distribution_function(u)
    t = np.linspace(0.0, 0.99, 23)
    assert np.max(np.abs(mu(t) - (1 - t))) <= 1e-13


def test_p1_distribution_level_grid_insensitive():
    mesh = mesh_polygon(unit_square(), 0.1)
    u = ScalarField.interpolate(mesh, lambda x, y: np.exp(-3 * ((x - .3) ** 2 + (y - .6) ** 2)))
    coarse = distribution_function(u, levels=256)
    fine = distribution_function(u, levels=512)
    for a in (1.0, 2.0, 3.5):
        idx = LorentzIndex(a, a)
        assert abs(lorentz_norm(coarse, idx) - lorentz_norm(fine, idx)) <= 1e-8


def test_p1_lorentz_matches_lp_norm():
    mesh = mesh_polygon(unit_square(), 0.25)
    u = ScalarField.interpolate(mesh, lambda x, y: x)
    mu = distribution_function(u)
    assert lorentz_norm(mu, LorentzIndex(2, 2)) == pytest.approx(math.sqrt(1 / 3), rel=1e-12)


def test_hardy_littlewood_with_constant_weight():
    mesh = mesh_polygon(unit_square(), 0.1)
    h = ScalarField.interpolate(mesh, lambda x, y: x * y)
    one = ScalarField.interpolate(mesh, 1.0)
    lhs, rhs = hardy_littlewood_check(h, one)
    assert lhs == pytest.approx(h.integral(), rel=1e-12)
    assert rhs == pytest.approx(lhs, rel=1e-12)


def test_hardy_littlewood_disjoint_indicators():
    h = StepFunction([1.0, 0.0], [1.0, 1.0])
    g = StepFunction([0.0, 1.0], [1.0, 1.0])
    lhs, rhs = hardy_littlewood_check(h, g)
    assert lhs == 0.0
    assert rhs == pytest.approx(1.0)


def test_profile_rejects_increasing_values():
    with pytest.raises(ValueError):
        MonotoneProfile.step([0.0, 1.0, 2.0], [1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(step_functions())
def test_rearrangement_idempotent(u):
    ustar = decreasing_rearrangement(distribution_function(u))
    again = decreasing_rearrangement(distribution_function(as_step(ustar)))
    assert np.allclose(again.breakpoints, ustar.breakpoints, rtol=1e-12, atol=1e-12)
    assert np.allclose(again.values, ustar.values, rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(step_functions())
def test_rearrangement_equimeasurable(u):
    mu = distribution_function(u)
    mu_star = distribution_function(as_step(decreasing_rearrangement(mu)))
    top = float(np.max(np.abs(u.values)))
    t = np.concatenate([np.linspace(0.0, top * 1.1, 50), np.abs(u.values)])
    assert np.max(np.abs(mu(t) - mu_star(t))) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(step_functions(), st.floats(0.5, 6.0))
def test_lorentz_diagonal_is_lp(u, a):
    expected = u.lp_norm(a)
    got = lorentz_norm(distribution_function(u), LorentzIndex(a, a))
    assert abs(got - expected) <= 1e-12 * max(expected, 1.0)


def test_hardy_littlewood_random_pairs():
    rng = np.random.default_rng(20261015)
    for _ in range(50):
        m = int(rng.integers(1, 12))
        w = rng.uniform(0.05, 2.0, m)
        h = StepFunction(rng.uniform(-3, 3, m), w)
        g = StepFunction(rng.uniform(-3, 3, m), w)
        lhs, rhs = hardy_littlewood_check(h, g)
        assert lhs <= rhs + 1e-10
