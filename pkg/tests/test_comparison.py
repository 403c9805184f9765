import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaprobin.comparison import (CheckRecord, Instance, boundary_level_records, counterexample_suite,
                                  default_k_grid, gronwall_bound, minima_record, radial_boundary_level_sides,
                                  thresholds, verify_lemma33, verify_minima, verify_theorem1, verify_theorem2)
from plaprobin.fem import RobinProblem, ScalarField, solve
from plaprobin.geometry import Ball, disk_polygon, mesh_polygon, unit_ball_volume, unit_square
from plaprobin.radial import TwoBallConfig, constant_source, solve_radial, two_ball_solutions


@pytest.fixture(scope="module")
def square_p2():
    return Instance(unit_square(), 1.0, 2.0, 1.0, h=0.1, label="square")


# -- thresholds ---------------------------------------------------------------

def test_thresholds_at_p_equal_two():
    th = thresholds(2, 2.0)
    assert th.k1 == pytest.approx(1.0)
    assert th.k2 == pytest.approx(1.0)
    assert th.pointwise_regime
    assert th.k3 is None


def test_threshold_k1_is_one_when_p_equals_n():
    assert thresholds(3, 3.0).k1 == pytest.approx(1.0, rel=1e-15)


def test_k3_above_critical_exponent():
    th = thresholds(2, 3.0)
    assert th.k3 == pytest.approx(4.0)
    assert not th.pointwise_regime
    assert default_k_grid(th.k3) == [1.0, 2.0, 4.0]


def test_thresholds_reject_p_at_most_one():
    with pytest.raises(ValueError):
        thresholds(2, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.floats(1.01, 10.0), st.floats(1.01, 10.0))
def test_threshold_monotonicity(n, p, q):
    lo, hi = sorted((p, q))
    a, b = thresholds(n, lo), thresholds(n, hi)
    assert a.k1 <= b.k1 * (1 + 1e-12)
    assert a.k2 <= b.k2 * (1 + 1e-12)
    # k3 exists above n/(n-1) and decreases there
    if a.k3 is not None:
        assert b.k3 <= a.k3 * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.floats(1.01, 10.0))
def test_k2_below_k1_exactly_when_p_at_most_n(n, p):
    th = thresholds(n, p)
    if p <= n:
        assert th.k2 <= th.k1 * (1 + 1e-12)
    else:
        assert th.k2 > th.k1


def test_k_grid_outside_range_rejected(square_p2):
    with pytest.raises(ValueError):
        verify_theorem1(None, instance=square_p2, k_grid=[2.0])


# -- records and reports ------------------------------------------------------

def test_record_key_order():
    rec = CheckRecord.inequality("x", 1.0, 2.0, 0.1)
    assert list(rec.as_dict()) == ["name", "lhs", "rhs", "margin", "tol", "pass"]
    assert rec.margin == 1.0
    assert rec.passed


def test_lorentz_report_square(square_p2):
    rep = verify_theorem1(None, instance=square_p2)
    names = [c.name for c in rep.checks]
    assert len(names) == 2 * len(default_k_grid(1.0))
    assert not rep.failures
    assert all(c.margin > 0 for c in rep.checks)
    doc = json.loads(rep.to_json())
    assert doc["p"] == 2.0 and doc["beta"] == 1.0 and doc["h"] == pytest.approx(square_p2.h)


def test_two_ball_lorentz_positive_margin():
    rep = verify_theorem1(TwoBallConfig(2, 2.0, 0.5, 0.3), k_grid=[1.0])
    assert len(rep.checks) == 2
    assert all(c.passed and c.margin > 0 for c in rep.checks)


def test_disk_is_equality_case():
    inst = Instance(disk_polygon(), 1.0, 2.0, 1.0, h=0.1, label="disk")
    rep = verify_theorem1(None, instance=inst)
    assert not rep.failures
    for c in rep.checks:
        assert abs(c.margin) <= 2e-3 * c.rhs


def test_pointwise_square(square_p2):
    rep = verify_theorem2(None, 2.0, 1.0, instance=square_p2)
    assert [c.name for c in rep.checks] == ["pointwise u* <= v*"]
    assert rep.checks[0].passed


def test_pointwise_regime_switch():
    inst = Instance(unit_square(), 1.0, 3.0, 1.0, h=0.1)
    rep = verify_theorem2(None, 3.0, 1.0, instance=inst)
    ks = sorted({float(c.name.rsplit("k=", 1)[1]) for c in rep.checks})
    assert ks == [1.0, 2.0, 4.0]
    assert not rep.failures


def test_experimental_pointwise_is_not_judged():
    inst = Instance(unit_square(), 1.0, 3.0, 1.0, h=0.1)
    rep = verify_theorem2(None, 3.0, 1.0, instance=inst, experimental=True)
    rec = rep.checks[-1]
    assert rec.passed is None and not rec.guaranteed


def test_minima(square_p2):
    assert minima_record(square_p2).passed


def test_minima_two_balls():
    u_star, v, _ = two_ball_solutions(TwoBallConfig(2, 2.0, 0.5, 0.3))
    u_m = float(u_star(np.nextafter(u_star.domain_length, 0.0)))
    assert u_m == 0.0 < v.v_m


def test_minima_disk_equality():
    mesh = mesh_polygon(disk_polygon(), 0.05)
    u, _ = solve(RobinProblem(2.0, 1.0, ScalarField.interpolate(mesh, 1.0)))
    v = solve_radial(Ball(2, 1.0), 2.0, 1.0, constant_source(math.pi))
    rec = verify_minima(u, v, 1e-3)
    assert rec.passed and abs(rec.margin) <= 1e-3


def test_boundary_level_records(square_p2):
    recs = boundary_level_records(square_p2)
    assert len(recs) == 2
    assert all(r.passed for r in recs)


def test_boundary_level_vanishing_trace_inconclusive():
    mesh = mesh_polygon(unit_square(), 0.25)
    u = ScalarField.interpolate(mesh, lambda x, y: x * (1 - x))
    rec = verify_lemma33(u, 2.0, 1.0, ScalarField.interpolate(mesh, 1.0))
    assert rec.passed is None


@pytest.mark.parametrize("n,p,beta", [(2, 2.0, 1.0), (2, 1.5, 0.5), (3, 3.0, 2.0)])
def test_radial_boundary_identity(n, p, beta):
    fstar = constant_source(unit_ball_volume(n), 1.5)
    v = solve_radial(Ball(n, 1.0), p, beta, fstar)
    for tau in (v.v_m, 2 * v.v_m, np.inf):
        lhs, rhs = radial_boundary_level_sides(v, fstar.integral(), tau)
        assert lhs == pytest.approx(rhs, rel=1e-8)


# -- Gronwall ----------------------------------------------------------------

def test_gronwall_linear_growth():
    assert gronwall_bound(1.0, 1.0, 2.0, 0.0, 3.0)[0] == pytest.approx(3.0, rel=1e-15)


def test_gronwall_base_point():
    assert gronwall_bound(0.7, 2.0, 3.5, 1.3, 2.0)[0] == pytest.approx(0.7, rel=1e-15)


@pytest.mark.parametrize("tau", [1.0, 1.5, 4.0, 37.0])
def test_gronwall_saturation(tau):
    b1, b2 = gronwall_bound(1.0, 1.0, 3.0, 0.0, tau)
    assert abs(b1 - tau ** 2) <= 1e-12 * tau ** 2
    assert abs(b2 - 2 * tau) <= 1e-12 * tau


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.1, 5.0), st.floats(1.1, 6.0), st.floats(0.0, 5.0), st.floats(1.0, 20.0))
def test_gronwall_bound_solves_equality(xi0, tau0, p, C, factor):
    # the bound is the solution of tau xi' = (p-1) xi + C
    tau = tau0 * factor
    b1, b2 = gronwall_bound(xi0, tau0, p, C, tau)
    assert tau * b2 == pytest.approx((p - 1) * b1 + C, rel=1e-10, abs=1e-10)


def test_gronwall_rejects_tau_below_base():
    with pytest.raises(ValueError):
        gronwall_bound(1.0, 2.0, 2.0, 0.0, 1.0)


# -- explicit examples --------------------------------------------------------

def test_counterexample_suite_records():
    rep = counterexample_suite()
    assert all(not c.guaranteed for c in rep.checks)
    by_name = {c.name: c for c in rep.checks}
    assert by_name["sup-norm shift fitted coefficient"].passed
    info = [c for c in rep.checks if "informational" in c.name]
    assert len(info) == 1 and info[0].passed is None
    assert rep.to_json() == counterexample_suite().to_json()
