import math

import numpy as np
import pytest

from plaprobin.fem import (RobinProblem, ScalarField, SolverConfig, boundary_integral, check_min_on_boundary,
                           energy, residual, solve, solve_linear_direct)
from plaprobin.geometry import disk_polygon, l_shape, mesh_polygon, unit_square


@pytest.fixture(scope="module")
def square_mesh():
    return mesh_polygon(unit_square(), 0.1)


@pytest.fixture(scope="module")
def disk_mesh():
    return mesh_polygon(disk_polygon(1.0), 0.05)


def test_energy_of_zero(square_mesh):
    prob = RobinProblem(3.0, 1.0, ScalarField.interpolate(square_mesh, 1.0))
    assert energy(prob, ScalarField.interpolate(square_mesh, 0.0)) == 0.0


@pytest.mark.parametrize("c", [0.5, 1.5])
def test_energy_of_constant_is_boundary_term(square_mesh, c):
    prob = RobinProblem(2.0, 1.0, ScalarField.interpolate(square_mesh, 0.0))
    assert energy(prob, ScalarField.interpolate(square_mesh, c)) == pytest.approx(2 * c * c, rel=1e-13)


def test_mesh_mismatch_rejected(square_mesh):
    other = mesh_polygon(unit_square(), 0.2)
    prob = RobinProblem(2.0, 1.0, ScalarField.interpolate(square_mesh, 1.0))
    with pytest.raises(ValueError):
        energy(prob, ScalarField.interpolate(other, 1.0))


@pytest.mark.parametrize("p", [1.0, 0.5])
def test_p_at_most_one_rejected(square_mesh, p):
    with pytest.raises(ValueError):
        RobinProblem(p, 1.0, ScalarField.interpolate(square_mesh, 1.0))


def test_negative_source_rejected(square_mesh):
    with pytest.raises(ValueError):
        RobinProblem(2.0, 1.0, ScalarField.interpolate(square_mesh, -1.0))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_zero_source_gives_zero(square_mesh, p):
    u, stats = solve(RobinProblem(p, 1.0, ScalarField.interpolate(square_mesh, 0.0)))
    assert stats.converged
    assert np.all(u.values == 0.0)


@pytest.mark.parametrize("p,center,edge", [(2.0, 0.75, 0.5), (3.0, 2 / (3 * math.sqrt(2)) + 1 / math.sqrt(2),
                                                             1 / math.sqrt(2))])
def test_disk_values(disk_mesh, p, center, edge):
    u, stats = solve(RobinProblem(p, 1.0, ScalarField.interpolate(disk_mesh, 1.0)))
    assert stats.converged
    assert u.max() == pytest.approx(center, abs=2e-3)
    bvals = u.values[disk_mesh.boundary_nodes]
    assert np.max(np.abs(bvals - edge)) < 2e-3


@pytest.mark.parametrize("p", [1.2, 1.5, 3.0, 4.0])
def test_energy_non_increasing(p):
    mesh = mesh_polygon(l_shape(), 0.1)
    u, stats = solve(RobinProblem(p, 0.5, ScalarField.interpolate(mesh, 1.0)))
    assert stats.converged
    assert np.all(np.diff(stats.energies) <= 0.0)
    assert u.min() >= -1e-8


def test_iterative_matches_direct_for_p2(square_mesh):
    prob = RobinProblem(2.0, 1.0, ScalarField.interpolate(square_mesh, lambda x, y: 1 + x))
    u, stats = solve(prob)
    direct = solve_linear_direct(prob)
    assert stats.converged
    assert np.max(np.abs(u.values - direct.values)) <= 1e-10


def test_residual_small_at_solution(square_mesh):
    prob = RobinProblem(3.0, 1.0, ScalarField.interpolate(square_mesh, 1.0))
    u, stats = solve(prob)
    r = residual(prob, u)
    assert np.linalg.norm(r) <= 1e-8 * np.linalg.norm(prob.f.values) * 10


def test_non_convergence_returns_best_iterate(square_mesh):
    prob = RobinProblem(4.0, 1.0, ScalarField.interpolate(square_mesh, 1.0))
    u, stats = solve(prob, SolverConfig(max_outer=1))
    assert not stats.converged
    assert np.all(np.isfinite(u.values))
    assert stats.final_energy <= 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_boundary_flux_balance(square_mesh, p):
    # test function 1 in the weak form: beta int_bdry u^{p-1} = int f
    beta = 0.5
    f = ScalarField.interpolate(square_mesh, lambda x, y: 1 + y ** 2)
    u, _ = solve(RobinProblem(p, beta, f))
    assert beta * boundary_integral(u, p - 1, exact=False) == pytest.approx(f.integral(), rel=1e-8)


def test_boundary_integral_exact_on_linear_trace(square_mesh):
    u = ScalarField.interpolate(square_mesh, lambda x, y: x)
    # int over the boundary of x^2: two horizontal sides give 1/3 each, x = 1 side gives 1
    assert boundary_integral(u, 2.0) == pytest.approx(5 / 3, rel=1e-13)


def test_min_on_boundary_for_disk_solution(disk_mesh):
    u, _ = solve(RobinProblem(2.0, 1.0, ScalarField.interpolate(disk_mesh, 1.0)))
    assert check_min_on_boundary(u)


def test_min_on_boundary_constant(square_mesh):
    assert check_min_on_boundary(ScalarField.interpolate(square_mesh, 2.0))


def test_min_on_boundary_detects_interior_dip(square_mesh):
    dip = ScalarField.interpolate(square_mesh,
                                  lambda x, y: 1 - 0.9 * np.exp(-50 * ((x - .5) ** 2 + (y - .5) ** 2)))
    assert not check_min_on_boundary(dip)


def test_field_save_load(tmp_path, square_mesh):
    u = ScalarField.interpolate(square_mesh, lambda x, y: np.sin(x) + y)
    u.save(tmp_path / "u.txt")
    back = ScalarField.load(square_mesh, tmp_path / "u.txt")
    assert np.array_equal(back.values, u.values)
