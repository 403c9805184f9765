"""P1 finite elements for the Robin p-Laplacian.

The discrete problem minimizes

    F(w) = 1/p sum_T |T| |grad w|^p + beta/p int_{bdry} |w|^p - int f w

with per-triangle constant gradients, two-point Gauss quadrature on boundary
edges and the exact (consistent mass) load for piecewise-linear f.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import cg

from .geometry import TriMesh

log = logging.getLogger(__name__)

_G = np.array([0.5 * (1 + 1 / np.sqrt(3)), 0.5 * (1 - 1 / np.sqrt(3))])
# basis values at the two Gauss points of an edge, rows = points
_EDGE_BASIS = np.array([[_G[0], _G[1]], [_G[1], _G[0]]])


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: TriMesh
    nodal_values: np.ndarray

    def __post_init__(self):
        v = np.array(self.nodal_values, dtype=float).reshape(-1)
        if v.shape[0] != self.mesh.n_nodes:
            raise ValueError(f"field has {v.shape[0]} values, mesh has {self.mesh.n_nodes} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "nodal_values", v)

    @property
    def values(self) -> np.ndarray:
        return self.nodal_values

    @classmethod
    def interpolate(cls, mesh: TriMesh, f: Union[float, Callable]) -> "ScalarField":
        if callable(f):
            vals = np.asarray(f(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
            vals = np.broadcast_to(vals, (mesh.n_nodes,))
        else:
            vals = np.full(mesh.n_nodes, float(f))
        return cls(mesh, vals)

    def gradients(self) -> np.ndarray:
        return np.einsum("tk,tkd->td", self.values[self.mesh.triangles], self.mesh.basis_gradients)

    def integral(self) -> float:
        return float(np.sum(self.mesh.areas * self.values[self.mesh.triangles].mean(axis=1)))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def save(self, path) -> None:
        """Write "node_index value" lines."""
        Path(path).write_text("".join(f"{i} {v!r}\n" for i, v in enumerate(self.values.tolist())))

    @classmethod
    def load(cls, mesh: TriMesh, path) -> "ScalarField":
        vals = np.full(mesh.n_nodes, np.nan)
        for ln in Path(path).read_text().split("\n"):
            if ln.strip():
                i, v = ln.split()
                vals[int(i)] = float(v)
        return cls(mesh, vals)


@dataclass(frozen=True)
class RobinProblem:
    p: float
    beta: float
    f: ScalarField
    eps_reg: float = 0.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if np.any(self.f.values < 0):
            raise ValueError("source f must be non-negative")
        if self.eps_reg < 0:
            raise ValueError("eps_reg must be >= 0")

    @property
    def mesh(self) -> TriMesh:
        return self.f.mesh


@dataclass(frozen=True)
class SolverConfig:
    eps_floor: float = 1e-10
    max_outer: int = 200
    max_cg: int = 50000
    tol_residual: float = 1e-10
    cg_rtol: float = 1e-12
    newton: bool = True
    newton_switch: float = 1e-3


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    final_energy: float
    residual: float
    converged: bool
    energies: tuple = field(default=(), repr=False)


# -- assembly ------------------------------------------------------------------

class _Operators:
    """Sparsity pattern and fixed matrices of one mesh."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        n = mesh.n_nodes
        tris = mesh.triangles
        bed = mesh.boundary_edges
        ti = np.repeat(tris, 3, axis=1).reshape(-1)
        tj = np.tile(tris, (1, 3)).reshape(-1)
        bi = np.repeat(bed, 2, axis=1).reshape(-1)
        bj = np.tile(bed, (1, 2)).reshape(-1)
        rows = np.concatenate([ti, bi])
        cols = np.concatenate([tj, bj])
        pattern = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        pattern.sort_indices()
        self.indptr, self.indices = pattern.indptr, pattern.indices
        # position of every local entry inside the CSR data array
        keys = rows * n + cols
        csr_rows = np.repeat(np.arange(n), np.diff(self.indptr))
        csr_keys = csr_rows * n + self.indices
        self.pos = np.searchsorted(csr_keys, keys)
        self.n_tri_entries = len(ti)
        self.nnz = len(self.indices)
        G = mesh.basis_gradients
        self.stiff_local = np.einsum("tkd,tld->tkl", G, G)  # (m,3,3)
        # consistent P1 mass matrix
        local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
        self.mass = self._build(np.einsum("t,kl->tkl", mesh.areas, local_mass).reshape(-1), None)
        self.bnd_local = np.einsum("gk,gl->gkl", _EDGE_BASIS, _EDGE_BASIS)  # (2,2,2)

    def _build(self, tri_data, bnd_data) -> sp.csr_matrix:
        data = np.zeros(self.nnz)
        if tri_data is not None:
            data += np.bincount(self.pos[:self.n_tri_entries], weights=tri_data, minlength=self.nnz)
        if bnd_data is not None:
            data += np.bincount(self.pos[self.n_tri_entries:], weights=bnd_data, minlength=self.nnz)
        n = self.mesh.n_nodes
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(n, n))

    def matrix(self, kappa: np.ndarray, c_gauss: np.ndarray) -> sp.csr_matrix:
        """Stiffness with triangle coefficient kappa plus edge mass with Gauss-point coefficients."""
        tri = (self.mesh.areas * kappa)[:, None, None] * self.stiff_local
        w = 0.5 * self.mesh.edge_lengths[:, None] * c_gauss  # (b,2)
        bnd = np.einsum("eg,gkl->ekl", w, self.bnd_local)
        return self._build(tri.reshape(-1), bnd.reshape(-1))

    def edge_values(self, u: np.ndarray) -> np.ndarray:
        return u[self.mesh.boundary_edges] @ _EDGE_BASIS.T  # (b,2) values at Gauss points


@lru_cache(maxsize=8)
def operators(mesh: TriMesh) -> _Operators:
    return _Operators(mesh)


def _safe_pow_times(x: np.ndarray, s: np.ndarray, p: float) -> np.ndarray:
    """|x|^{p-2} s with the convention 0 when x == 0 (valid for p > 1)."""
    out = np.zeros_like(s, dtype=float)
    nz = x != 0
    out[nz] = np.abs(x[nz]) ** (p - 2) * s[nz]
    return out


def _power_diff(x2: np.ndarray, dx2: np.ndarray, p: float) -> np.ndarray:
    """(x2 + dx2)^{p/2} - x2^{p/2} for squares x2 >= 0, accurate for small dx2."""
    out = np.empty_like(x2)
    pos = x2 > 0
    out[~pos] = np.maximum(dx2[~pos], 0.0) ** (p / 2)
    r = np.maximum(dx2[pos] / x2[pos], -1.0)
    with np.errstate(divide="ignore"):
        out[pos] = x2[pos] ** (p / 2) * np.expm1(0.5 * p * np.log1p(r))
    return out


def load_vector(f: ScalarField) -> np.ndarray:
    return operators(f.mesh).mass @ f.values


class _Functional:
    """Discrete energy, its gradient and Picard matrices for fixed (mesh, p, beta, load)."""

    def __init__(self, mesh: TriMesh, p: float, beta: float, load: np.ndarray):
        self.mesh, self.p, self.beta, self.load = mesh, p, beta, load
        self.ops = operators(mesh)
        self.G = mesh.basis_gradients
        self.tris = mesh.triangles
        self.bed = mesh.boundary_edges
        self.wL = 0.5 * mesh.edge_lengths

    def grads(self, u):
        return np.einsum("tk,tkd->td", u[self.tris], self.G)

    def energy(self, u) -> float:
        p = self.p
        gn = np.linalg.norm(self.grads(u), axis=1)
        ub = self.ops.edge_values(u)
        vol = np.sum(self.mesh.areas * gn ** p) / p
        bnd = self.beta / p * np.sum(self.wL[:, None] * np.abs(ub) ** p)
        return float(vol + bnd - self.load @ u)

    def energy_change(self, u, step) -> float:
        """F(u + step) - F(u) summed from per-element differences (no cancellation of totals)."""
        p = self.p
        g0, dg = self.grads(u), self.grads(step)
        vol = np.sum(self.mesh.areas * _power_diff(np.sum(g0 * g0, axis=1),
                                                   np.sum(dg * (dg + 2 * g0), axis=1), p)) / p
        b0, db = self.ops.edge_values(u), self.ops.edge_values(step)
        bnd = self.beta / p * np.sum(self.wL[:, None] * _power_diff(b0 * b0, db * (db + 2 * b0), p))
        return float(vol + bnd - self.load @ step)

    def gradient(self, u) -> np.ndarray:
        p = self.p
        g = self.grads(u)
        gn = np.linalg.norm(g, axis=1)
        flux = _safe_pow_times(gn[:, None].repeat(2, axis=1), g, p)
        loc = self.mesh.areas[:, None] * np.einsum("td,tkd->tk", flux, self.G)
        r = np.bincount(self.tris.reshape(-1), weights=loc.reshape(-1), minlength=self.mesh.n_nodes)
        ub = self.ops.edge_values(u)
        bflux = self.beta * _safe_pow_times(ub, ub, p) * self.wL[:, None]
        bloc = bflux @ _EDGE_BASIS  # (b,2) contributions to the two edge nodes
        r += np.bincount(self.bed.reshape(-1), weights=bloc.reshape(-1), minlength=self.mesh.n_nodes)
        return r - self.load

    def picard_matrix(self, u, eps_grad: float, eps_val: float) -> sp.csr_matrix:
        p = self.p
        gn2 = np.sum(self.grads(u) ** 2, axis=1)
        kappa = (gn2 + eps_grad ** 2) ** ((p - 2) / 2)
        ub = self.ops.edge_values(u)
        c = self.beta * (ub ** 2 + eps_val ** 2) ** ((p - 2) / 2)
        return self.ops.matrix(kappa, c)

    def hessian(self, u, eps_grad: float, eps_val: float) -> sp.csr_matrix:
        """Hessian of the energy with |.|^2 replaced by |.|^2 + eps^2 in the coefficients."""
        p = self.p
        g = self.grads(u)
        r2 = np.sum(g ** 2, axis=1) + eps_grad ** 2
        kappa = r2 ** ((p - 2) / 2)
        Gg = np.einsum("tkd,td->tk", self.G, g)
        tri = self.ops.stiff_local + ((p - 2) / r2)[:, None, None] * Gg[:, :, None] * Gg[:, None, :]
        tri = (self.mesh.areas * kappa)[:, None, None] * tri
        ub = self.ops.edge_values(u)
        b2 = ub ** 2 + eps_val ** 2
        c = self.beta * b2 ** ((p - 2) / 2) * (1 + (p - 2) * ub ** 2 / b2)
        w = self.wL[:, None] * c
        bnd = np.einsum("eg,gkl->ekl", w, self.ops.bnd_local)
        return self.ops._build(tri.reshape(-1), bnd.reshape(-1))


def _pcg(A: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, config: SolverConfig) -> np.ndarray:
    d = A.diagonal()
    M = sp.diags(1.0 / d)
    x, info = cg(A, b, x0=x0, rtol=config.cg_rtol, atol=0.0, maxiter=config.max_cg, M=M)
    if info != 0:
        log.warning("PCG stopped without reaching rtol=%g (info=%d)", config.cg_rtol, info)
    return x


def _line_search(F: _Functional, u: np.ndarray, d: np.ndarray) -> float:
    """Exact minimization of the convex map t -> F(u + t d) via its derivative."""
    def dphi(t):
        return float(F.gradient(u + t * d) @ d)

    d0 = dphi(0.0)
    if d0 >= 0:
        return 0.0
    hi = 1.0
    dh = dphi(hi)
    if abs(dh) <= 1e-12 * abs(d0):
        return 1.0
    while dh < 0 and hi < 64:
        hi *= 2
        dh = dphi(hi)
    if dh < 0:
        return hi
    return brentq(dphi, 0.0, hi, xtol=1e-14, rtol=1e-12, maxiter=200)


def minimize_energy(mesh: TriMesh, p: float, beta: float, load: np.ndarray,
                    config: SolverConfig | None = None, u0: np.ndarray | None = None,
                    eps_reg: float = 0.0) -> tuple[np.ndarray, SolveStats]:
    """Regularized Picard iteration with exact line search and epsilon continuation."""
    config = config or SolverConfig()
    F = _Functional(mesh, p, beta, load)
    ops = F.ops
    bnorm = float(np.linalg.norm(load))
    n = mesh.n_nodes
    if bnorm == 0.0:
        u = np.zeros(n)
        return u, SolveStats(0, 0.0, 0.0, True, (0.0,))

    # linear Robin problem as starting point and for p = 2
    A1 = ops.matrix(np.ones(len(mesh.triangles)), np.full((len(mesh.boundary_edges), 2), beta))
    bdiag = ops.matrix(np.zeros(len(mesh.triangles)), np.full((len(mesh.boundary_edges), 2), beta)).diagonal()
    assert bdiag[mesh.boundary_nodes].min() > 0, "boundary mass must be positive on every boundary node"
    if u0 is None:
        u = _pcg(A1, load, np.zeros(n), config)
    else:
        u = np.array(u0, dtype=float)

    if p == 2.0:
        if u0 is not None:
            u = _pcg(A1, load, u, config)
        res = float(np.linalg.norm(F.gradient(u))) / bnorm
        E = F.energy(u)
        return u, SolveStats(1, E, res, res <= config.tol_residual, (E,))

    floor = max(config.eps_floor, eps_reg)
    g0 = np.linalg.norm(F.grads(u), axis=1)
    mean_grad = float(np.sum(mesh.areas * g0) / mesh.area)
    mean_val = float(np.mean(np.abs(ops.edge_values(u))))
    scale_g = 1e-2 * (mean_grad if mean_grad > 0 else 1.0)
    scale_v = 1e-2 * (mean_val if mean_val > 0 else 1.0)

    E = F.energy(u)
    energy_scale = max(abs(float(load @ u)), np.finfo(float).tiny)
    energies = [E]
    stalled = 0
    best_u, best_E = u.copy(), E
    res = float(np.linalg.norm(F.gradient(u))) / bnorm
    it = 0
    for it in range(1, config.max_outer + 1):
        eps_g = max(scale_g * 0.5 ** (it - 1), floor)
        eps_v = max(scale_v * 0.5 ** (it - 1), floor)
        decrement = np.inf
        if config.newton and (res <= config.newton_switch or eps_g <= floor):
            grad = F.gradient(u)
            d = _pcg(F.hessian(u, eps_g, eps_v), -grad, np.zeros(n), config)
            decrement = float(-grad @ d) / energy_scale
        else:
            target = _pcg(F.picard_matrix(u, eps_g, eps_v), load, u, config)
            d = target - u
        t = _line_search(F, u, d)
        dE = F.energy_change(u, t * d) if t > 0 else 0.0
        if dE <= 0 and t > 0:
            u, E = u + t * d, E + dE
            stalled = 0
        else:
            stalled += 1
            if stalled >= 5 and eps_g <= floor:
                break
        energies.append(E)
        if E <= best_E:
            best_u, best_E = u.copy(), E
        res = float(np.linalg.norm(F.gradient(u))) / bnorm
        log.debug("step %d eps=%.2e t=%.3f E=%.15g res=%.3e dec=%.3e", it, eps_g, t, E, res, decrement)
        if res <= config.tol_residual or decrement <= config.tol_residual ** 2:
            return u, SolveStats(it, E, res, True, tuple(energies))
    res_best = float(np.linalg.norm(F.gradient(best_u))) / bnorm
    return best_u, SolveStats(it, best_E, res_best, False, tuple(energies))


def energy(problem: RobinProblem, w: ScalarField) -> float:
    if w.mesh is not problem.mesh:
        raise ValueError("field and problem live on different meshes")
    return _Functional(problem.mesh, problem.p, problem.beta, load_vector(problem.f)).energy(w.values)


def residual(problem: RobinProblem, w: ScalarField) -> np.ndarray:
    """Discrete Euler-Lagrange residual vector of the energy at w."""
    if w.mesh is not problem.mesh:
        raise ValueError("field and problem live on different meshes")
    return _Functional(problem.mesh, problem.p, problem.beta, load_vector(problem.f)).gradient(w.values)


def solve(problem: RobinProblem, config: SolverConfig | None = None,
          u0: ScalarField | None = None) -> tuple[ScalarField, SolveStats]:
    """Minimize the discrete energy; returns the best iterate if not converged."""
    vals, stats = minimize_energy(problem.mesh, problem.p, problem.beta, load_vector(problem.f),
                                  config, None if u0 is None else u0.values, problem.eps_reg)
    return ScalarField(problem.mesh, vals), stats


def solve_linear_direct(problem: RobinProblem) -> ScalarField:
    """Sparse direct solve of the p = 2 system (reference for the iterative path)."""
    if problem.p != 2.0:
        raise ValueError("direct linear solve only applies to p = 2")
    mesh = problem.mesh
    A = operators(mesh).matrix(np.ones(len(mesh.triangles)),
                               np.full((len(mesh.boundary_edges), 2), problem.beta))
    from scipy.sparse.linalg import spsolve
    return ScalarField(mesh, spsolve(A.tocsc(), load_vector(problem.f)))


def boundary_integral(u: ScalarField, power: float, exact: bool = True) -> float:
    """int_{bdry} u^power dH for a non-negative P1 field.

    ``exact=True`` integrates the power of the linear edge trace in closed
    form; otherwise the two-point Gauss rule of the solver is used.
    """
    mesh = u.mesh
    L = mesh.edge_lengths
    if not exact:
        ub = operators(mesh).edge_values(u.values)
        return float(np.sum(0.5 * L[:, None] * np.abs(ub) ** power))
    a = np.abs(u.values[mesh.boundary_edges[:, 0]])
    b = np.abs(u.values[mesh.boundary_edges[:, 1]])
    q = power + 1
    same = np.isclose(a, b, rtol=1e-12, atol=0)
    out = np.empty_like(a)
    out[same] = L[same] * (0.5 * (a[same] + b[same])) ** power
    ns = ~same
    out[ns] = L[ns] * (b[ns] ** q - a[ns] ** q) / (q * (b[ns] - a[ns]))
    return float(np.sum(out))


def check_min_on_boundary(u: ScalarField, tol: float = 1e-12) -> bool:
    """True when the minimum over boundary nodes does not exceed the interior minimum."""
    mesh = u.mesh
    inner = mesh.interior_nodes
    if len(inner) == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(u.values))))
    return bool(u.values[mesh.boundary_nodes].min() <= u.values[inner].min() + tol * scale)
