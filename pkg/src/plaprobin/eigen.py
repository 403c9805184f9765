"""First Robin eigenvalue of the p-Laplacian by nonlinear inverse iteration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect
from scipy.special import j0, j1

from .comparison import FLOOR, RUNGE_FACTOR, CheckRecord
from .fem import ScalarField, SolverConfig, _Functional, minimize_energy
from .geometry import Domain, TriMesh, disk_polygon, domain_area, mesh_polygon, refine

_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalue: float
    eigenfunction: ScalarField
    iterations: int
    residual: float
    converged: bool = True
    history: tuple = field(default=(), repr=False)

    @property
    def lambda_(self) -> float:
        return self.eigenvalue


def _midpoint_values(mesh: TriMesh, u: np.ndarray) -> np.ndarray:
    t = mesh.triangles
    return np.stack([0.5 * (u[t[:, i]] + u[t[:, j]]) for i, j in _EDGE_PAIRS], axis=1)


def lp_power(mesh: TriMesh, u: np.ndarray, p: float) -> float:
    """int |u|^p with the edge-midpoint rule (exact for quadratics)."""
    return float(np.sum(mesh.areas / 3 * np.sum(np.abs(_midpoint_values(mesh, u)) ** p, axis=1)))


def _weighted_load(mesh: TriMesh, u: np.ndarray, p: float) -> np.ndarray:
    """int |u|^{p-2} u phi_i with the same midpoint rule."""
    w = _midpoint_values(mesh, u)
    g = np.abs(w) ** (p - 1) * np.sign(w) * (mesh.areas / 3)[:, None]
    t = mesh.triangles
    b = np.zeros(mesh.n_nodes)
    for col, (i, j) in enumerate(_EDGE_PAIRS):
        np.add.at(b, t[:, i], 0.5 * g[:, col])
        np.add.at(b, t[:, j], 0.5 * g[:, col])
    return b


def _numerator(mesh: TriMesh, u: np.ndarray, p: float, beta: float) -> float:
    # p times the energy with zero source
    return p * _Functional(mesh, p, beta, np.zeros(mesh.n_nodes)).energy(u)


def rayleigh(u: ScalarField, p: float, beta: float) -> float:
    """(int |grad u|^p + beta int_bdry |u|^p) / int |u|^p."""
    den = lp_power(u.mesh, u.values, p)
    if den == 0:
        raise ValueError("Rayleigh quotient of the zero function")
    return _numerator(u.mesh, u.values, p, beta) / den


def first_eigenpair(mesh: TriMesh, p: float, beta: float, tol: float = 1e-9, max_iter: int = 500,
                    config: SolverConfig | None = None) -> EigenResult:
    """Inverse iteration -Delta_p u_{k+1} = lambda_k |u_k|^{p-2} u_k, normalized in L^p."""
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    u = np.ones(mesh.n_nodes)
    u /= lp_power(mesh, u, p) ** (1 / p)
    lam = _numerator(mesh, u, p, beta)
    history = [lam]
    change = np.inf
    for it in range(1, max_iter + 1):
        load = lam * _weighted_load(mesh, u, p)
        w, stats = minimize_energy(mesh, p, beta, load, config, u0=u)
        w /= lp_power(mesh, w, p) ** (1 / p)
        new = _numerator(mesh, w, p, beta)
        if new > lam * (1 + 1e-12):
            raise RuntimeError(f"Rayleigh quotient increased from {lam!r} to {new!r}")
        change = abs(new - lam) / lam
        u, lam = w, new
        history.append(lam)
        if change <= tol:
            return EigenResult(lam, ScalarField(mesh, u), it, change, True, tuple(history))
    return EigenResult(lam, ScalarField(mesh, u), max_iter, change, False, tuple(history))


def robin_disk_eigenvalue(beta: float = 1.0, radius: float = 1.0) -> float:
    """lambda with sqrt(lambda) J1(sqrt(lambda) R) = beta J0(sqrt(lambda) R) for p = 2 on a disk."""
    def g(k):
        return k * j1(k * radius) - beta * j0(k * radius)
    # the first root lies below the first zero of J0
    k = bisect(g, 1e-12, 2.404825557695773 / radius, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    return k * k


def faber_krahn_check(omega: Domain, p: float, beta: float, h: float = 0.05,
                      config: SolverConfig | None = None) -> CheckRecord:
    """lambda(ball of equal area) <= lambda(omega), using a 64-gon for the ball."""
    if p < 2:
        raise ValueError("the Faber-Krahn comparison is only claimed for p >= n = 2")
    area = domain_area(omega)
    ball = disk_polygon(radius=float(np.sqrt(area / np.pi)))
    lams = {}
    for key, dom in (("omega", omega), ("ball", ball)):
        coarse = mesh_polygon(dom, h)
        lams[key] = [first_eigenpair(m, p, beta, config=config) for m in (coarse, refine(coarse))]
    lo = [r.eigenvalue for r in lams["omega"]]
    ls = [r.eigenvalue for r in lams["ball"]]
    tol = RUNGE_FACTOR * (abs(lo[0] - lo[1]) + abs(ls[0] - ls[1])) + FLOOR * lo[1]
    rec = CheckRecord.inequality(f"faber-krahn p={p:g} beta={beta:g}", ls[1], lo[1], tol)
    if not all(r.converged for rs in lams.values() for r in rs):
        rec.passed = None
        rec.note = "eigen iteration did not converge"
    return rec
