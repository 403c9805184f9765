import math

import numpy as np
import pytest
from scipy.special import j0, j1

from plaprobin.eigen import faber_krahn_check, first_eigenpair, rayleigh, robin_disk_eigenvalue
from plaprobin.fem import ScalarField
from plaprobin.geometry import disk_polygon, mesh_polygon, unit_square

DIRICHLET_DISK = 2.404825557695773 ** 2


@pytest.fixture(scope="module")
def disk_mesh():
    return mesh_polygon(disk_polygon(), 0.1)


def test_rayleigh_constant_on_square():
    mesh = mesh_polygon(unit_square(), 0.2)
    assert rayleigh(ScalarField.interpolate(mesh, 1.0), 2.0, 1.0) == pytest.approx(4.0, rel=1e-13)


def test_rayleigh_constant_on_disk(disk_mesh):
    # the 64-gon perimeter exceeds 2 pi by about 0.08 %
    assert rayleigh(ScalarField.interpolate(disk_mesh, 1.0), 2.0, 1.0) == pytest.approx(2.0, rel=2e-3)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_rayleigh_scale_invariant(disk_mesh, p):
    u = ScalarField.interpolate(disk_mesh, lambda x, y: 1.2 - x * x + 0.3 * y)
    scaled = ScalarField(disk_mesh, -3.7 * u.values)
    assert rayleigh(scaled, p, 0.8) == pytest.approx(rayleigh(u, p, 0.8), rel=1e-12)


def test_rayleigh_zero_rejected(disk_mesh):
    with pytest.raises(ValueError):
        rayleigh(ScalarField.interpolate(disk_mesh, 0.0), 2.0, 1.0)


def test_bessel_oracle():
    lam = robin_disk_eigenvalue(1.0)
    k = math.sqrt(lam)
    assert abs(k * j1(k) - j0(k)) <= 1e-14
    assert lam == pytest.approx(1.5769927, abs=1e-6)


def test_bessel_oracle_large_beta():
    values = [robin_disk_eigenvalue(b) for b in (1.0, 10.0, 100.0, 1e4)]
    assert all(a < b for a, b in zip(values, values[1:]))
    assert values[-1] < DIRICHLET_DISK
    assert values[-1] == pytest.approx(DIRICHLET_DISK, rel=1e-3)


def test_bessel_oracle_scaling():
    # lambda(beta, R) = lambda(beta R, 1) / R^2
    assert robin_disk_eigenvalue(1.0, 2.0) == pytest.approx(robin_disk_eigenvalue(2.0) / 4, rel=1e-12)


def test_disk_eigenvalue(disk_mesh):
    res = first_eigenpair(disk_mesh, 2.0, 1.0)
    assert res.converged
    assert abs(res.eigenvalue - robin_disk_eigenvalue(1.0)) <= 1e-2
    hist = np.asarray(res.history)
    assert np.all(np.diff(hist) <= 1e-12 * hist[:-1])
    assert rayleigh(res.eigenfunction, 2.0, 1.0) == pytest.approx(res.eigenvalue, rel=1e-12)
    assert res.eigenfunction.min() > 0


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_eigenvalue_other_p(disk_mesh, p):
    res = first_eigenpair(disk_mesh, p, 1.0)
    assert res.converged
    const = rayleigh(ScalarField.interpolate(disk_mesh, 1.0), p, 1.0)
    assert 0 < res.eigenvalue <= const


def test_eigenvalue_increases_with_beta(disk_mesh):
    lams = [first_eigenpair(disk_mesh, 2.0, b).eigenvalue for b in (0.5, 1.0, 5.0)]
    assert lams[0] < lams[1] < lams[2] < DIRICHLET_DISK


def test_faber_krahn_square():
    rec = faber_krahn_check(unit_square(), 2.0, 1.0, h=0.1)
    assert rec.passed and rec.margin > 0


def test_faber_krahn_disk_is_equality():
    rec = faber_krahn_check(disk_polygon(), 2.0, 1.0, h=0.1)
    assert rec.passed
    assert abs(rec.margin) <= 1e-3 * rec.rhs


def test_faber_krahn_requires_p_at_least_n():
    with pytest.raises(ValueError):
        faber_krahn_check(unit_square(), 1.5, 1.0)


def test_invalid_parameters():
    mesh = mesh_polygon(unit_square(), 0.25)
    with pytest.raises(ValueError):
        first_eigenpair(mesh, 1.0, 1.0)
    with pytest.raises(ValueError):
        first_eigenpair(mesh, 2.0, 0.0)
