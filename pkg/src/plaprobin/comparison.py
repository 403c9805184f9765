"""Comparison checks between a solution on a domain and the symmetrized solution.

Every check is an inequality ``lhs <= rhs + tol``.  For finite element
quantities the allowance ``tol`` is calibrated on each instance from two
nested meshes: 3 |Q_h - Q_{h/2}| plus a relative floor, with the reported
left side taken from the finer mesh.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from .fem import RobinProblem, ScalarField, SolverConfig, SolveStats, boundary_integral, solve
from .geometry import Domain, TriMesh, domain_area, mesh_polygon, prolong, refine, symmetrize_domain
from .radial import (RadialSolution, TwoBallConfig, sup_shift_coefficient, lp_gap_coefficient,
                     example2_lp_gap, solve_radial, two_ball_solutions)
from .rearrangement import (LorentzIndex, MonotoneProfile, decreasing_rearrangement,
                            distribution_function, lorentz_norm, write_profiles_csv)

log = logging.getLogger(__name__)

FLOOR = 1e-9
RUNGE_FACTOR = 3.0


@dataclass(frozen=True)
class Thresholds:
    k1: float
    k2: float
    k3: Optional[float]
    pointwise_regime: bool


def thresholds(n: int, p: float) -> Thresholds:
    if n < 2:
        raise ValueError("n must be >= 2")
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    k1 = n * (p - 1) / ((n - 1) * p)
    k2 = n * (p - 1) / ((n - 2) * p + n)
    critical = n / (n - 1)
    k3 = n * (p - 1) / (n * (p - 1) - p) if p > critical else None
    return Thresholds(k1, k2, k3, p <= critical)


def default_k_grid(k_max: float) -> list:
    ks = {k_max / 4, k_max / 2, k_max}
    if k_max >= 1:
        ks.add(1.0)
    return sorted(ks)


@dataclass
class CheckRecord:
    name: str
    lhs: Optional[float]
    rhs: Optional[float]
    tol: float = 0.0
    passed: Optional[bool] = None
    guaranteed: bool = True
    note: str = ""

    @property
    def margin(self) -> Optional[float]:
        if self.lhs is None or self.rhs is None:
            return None
        return self.rhs - self.lhs

    @classmethod
    def inequality(cls, name, lhs, rhs, tol, guaranteed=True, note="") -> "CheckRecord":
        return cls(name, float(lhs), float(rhs), float(tol), bool(lhs <= rhs + tol), guaranteed, note)

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "tol": self.tol, "pass": self.passed}


@dataclass
class ComparisonReport:
    instance: str
    n: int
    p: float
    beta: float
    h: Optional[float]
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if c.passed is False]

    @property
    def guaranteed_failures(self) -> list:
        return [c for c in self.checks if c.passed is False and c.guaranteed]

    def as_dict(self) -> dict:
        d = {"instance": self.instance, "n": self.n, "p": self.p, "beta": self.beta, "h": self.h,
             "checks": [c.as_dict() for c in self.checks]}
        if self.notes:
            d["notes"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


# -- finite element instances ------------------------------------------------

def _source_field(mesh: TriMesh, f) -> ScalarField:
    if isinstance(f, ScalarField):
        return f
    return ScalarField.interpolate(mesh, f)


class Instance:
    """A domain problem solved on a mesh and on its red refinement, plus the symmetrized problem."""

    def __init__(self, domain: Domain, f: Union[float, Callable, ScalarField], p: float, beta: float,
                 h: float = 0.05, label: str = "", config: SolverConfig | None = None):
        self.domain, self.p, self.beta, self.label = domain, float(p), float(beta), label
        self.n = 2
        self.config = config or SolverConfig()
        coarse = f.mesh if isinstance(f, ScalarField) else mesh_polygon(domain, h)
        self.h = float(coarse.h)
        fine = refine(coarse)
        f_c = _source_field(coarse, f)
        f_f = ScalarField(fine, prolong(coarse, f_c.values))
        self.meshes = (coarse, fine)
        self.sources = (f_c, f_f)
        self.area = domain_area(domain)
        self.ball = symmetrize_domain(self.area, 2)
        self.solutions = []
        self.stats: list[SolveStats] = []
        for fld in self.sources:
            u, st = solve(RobinProblem(self.p, self.beta, fld), self.config)
            self.solutions.append(u)
            self.stats.append(st)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.stats)

    @cached_property
    def source_profiles(self) -> list:
        return [decreasing_rearrangement(distribution_function(f)) for f in self.sources]

    @cached_property
    def radial(self) -> list:
        return [solve_radial(self.ball, self.p, self.beta, fs) for fs in self.source_profiles]

    @cached_property
    def distributions(self) -> list:
        return [distribution_function(u) for u in self.solutions]

    @cached_property
    def rearranged(self) -> list:
        return [decreasing_rearrangement(mu) for mu in self.distributions]

    @cached_property
    def radial_distributions(self) -> list:
        return [v.distribution() for v in self.radial]

    def report(self, suffix: str = "") -> ComparisonReport:
        rep = ComparisonReport(self.label + suffix, self.n, self.p, self.beta, self.h)
        for i, st in enumerate(self.stats):
            if not st.converged:
                rep.notes.append(f"solver did not converge on mesh {i} (residual {st.residual:.3e})")
        return rep

    def inconclusive(self, name: str) -> CheckRecord:
        return CheckRecord(name, None, None, 0.0, None, True, "solver did not converge")


def _lorentz_records(inst: Instance, family: str, ks: list) -> list:
    out = []
    for k in ks:
        idx = LorentzIndex(k, 1.0) if family == "k,1" else LorentzIndex(inst.p * k, inst.p)
        name = f"lorentz_L({idx.a:.6g},{idx.q:.6g}) k={k:.6g}"
        if not inst.converged:
            out.append(inst.inconclusive(name))
            continue
        lc, lf = (lorentz_norm(mu, idx) for mu in inst.distributions)
        rc, rf = (lorentz_norm(phi, idx) for phi in inst.radial_distributions)
        tol = RUNGE_FACTOR * (abs(lc - lf) + abs(rc - rf)) + FLOOR * max(abs(lf), abs(rf))
        out.append(CheckRecord.inequality(name, lf, rf, tol))
    return out


def _two_ball_report(cfg: TwoBallConfig, k_grid1: list, k_grid2: list, label: str) -> ComparisonReport:
    u_star, v, _ = two_ball_solutions(cfg)
    mu = u_star.generalized_inverse()
    phi = v.distribution()
    rep = ComparisonReport(label or f"two_balls r={cfg.r:g}", cfg.n, cfg.p, cfg.beta, None)
    for family, ks in (("k,1", k_grid1), ("pk,p", k_grid2)):
        for k in ks:
            idx = LorentzIndex(k, 1.0) if family == "k,1" else LorentzIndex(cfg.p * k, cfg.p)
            lhs, rhs = lorentz_norm(mu, idx), lorentz_norm(phi, idx)
            rep.checks.append(CheckRecord.inequality(f"lorentz_L({idx.a:.6g},{idx.q:.6g}) k={k:.6g}",
                                                     lhs, rhs, FLOOR * max(abs(lhs), abs(rhs))))
    return rep


def verify_theorem1(omega, f=1.0, p: float = 2.0, beta: float = 1.0, k_grid=None, h: float = 0.05,
                    config: SolverConfig | None = None, instance: Instance | None = None,
                    label: str = "") -> ComparisonReport:
    """Lorentz comparison L^{k,1} (k <= k1) and L^{pk,p} (k <= k2) for a general source.

    ``omega`` may be a TwoBallConfig, in which case the explicit solutions are
    used (source 1 on the unit ball, 0 on the small one).
    """
    if isinstance(omega, TwoBallConfig):
        th = thresholds(omega.n, omega.p)
        g1 = k_grid if k_grid is not None else default_k_grid(th.k1)
        g2 = k_grid if k_grid is not None else default_k_grid(th.k2)
        _check_grid(g1, th.k1)
        _check_grid(g2, th.k2)
        return _two_ball_report(omega, g1, g2, label)
    inst = instance or Instance(omega, f, p, beta, h, label, config)
    th = thresholds(2, inst.p)
    g1 = k_grid if k_grid is not None else default_k_grid(th.k1)
    g2 = k_grid if k_grid is not None else default_k_grid(th.k2)
    _check_grid(g1, th.k1)
    _check_grid(g2, th.k2)
    rep = inst.report(" lorentz")
    rep.checks += _lorentz_records(inst, "k,1", g1)
    rep.checks += _lorentz_records(inst, "pk,p", g2)
    return rep


def _check_grid(ks, k_max):
    if any(not (0 < k <= k_max * (1 + 1e-12)) for k in ks):
        raise ValueError(f"k values must lie in (0, {k_max!r}]")


def pointwise_record(inst: Instance, guaranteed: bool = True) -> CheckRecord:
    """u*(s) <= v*(s) on the merged breakpoints; the tightest point is reported."""
    name = "pointwise u* <= v*"
    if not inst.converged:
        return inst.inconclusive(name)
    uc, uf = inst.rearranged
    vc, vf = (v.star for v in inst.radial)
    s = np.union1d(np.union1d(uc.breakpoints, uf.breakpoints), vf.breakpoints)
    s = s[(s >= 0) & (s < inst.area * (1 - 1e-12))]
    a, b = uf(s), vf(s)
    tol = RUNGE_FACTOR * (np.abs(uc(s) - a) + np.abs(vc(s) - b)) + FLOOR * np.maximum(np.abs(a), np.abs(b))
    slack = b + tol - a
    i = int(np.argmin(slack))
    rec = CheckRecord.inequality(name, a[i], b[i], tol[i], guaranteed, f"s={s[i]:.17g}")
    if not guaranteed:
        rec.passed = None
        rec.note += "; experimental, no sign claimed"
    return rec


def verify_theorem2(omega, p: float, beta: float, k_grid=None, h: float = 0.05, experimental: bool = False,
                    config: SolverConfig | None = None, instance: Instance | None = None,
                    label: str = "") -> ComparisonReport:
    """Source f = 1: pointwise comparison when p <= n/(n-1), Lorentz up to k3 otherwise."""
    inst = instance or Instance(omega, 1.0, p, beta, h, label, config)
    th = thresholds(2, inst.p)
    rep = inst.report(" pointwise")
    if th.pointwise_regime:
        rep.checks.append(pointwise_record(inst))
        return rep
    ks = k_grid if k_grid is not None else default_k_grid(th.k3)
    _check_grid(ks, th.k3)
    rep.checks += _lorentz_records(inst, "k,1", ks)
    rep.checks += _lorentz_records(inst, "pk,p", ks)
    if experimental:
        rep.checks.append(pointwise_record(inst, guaranteed=False))
    return rep


def verify_minima(u: ScalarField, v: RadialSolution, tol: float = 0.0) -> CheckRecord:
    """min u <= min v."""
    return CheckRecord.inequality("minima u_m <= v_m", u.min(), v.v_m, tol)


def minima_record(inst: Instance) -> CheckRecord:
    if not inst.converged:
        return inst.inconclusive("minima u_m <= v_m")
    uc, uf = (u.min() for u in inst.solutions)
    vc, vf = (v.v_m for v in inst.radial)
    tol = RUNGE_FACTOR * (abs(uc - uf) + abs(vc - vf)) + FLOOR * max(abs(uf), abs(vf))
    return verify_minima(inst.solutions[1], inst.radial[1], tol)


def boundary_level_integral(u: ScalarField, p: float, tau: float = np.inf) -> float:
    """int_0^tau t^{p-1} (int_{bdry, u > t} 1/u dH) dt, exact for a positive P1 trace.

    On an edge where u runs linearly from a to b the inner integral is
    L/(b-a) log(b/max(t, a)); integrating in t gives a closed form.
    """
    mesh = u.mesh
    va = u.values[mesh.boundary_edges[:, 0]]
    vb = u.values[mesh.boundary_edges[:, 1]]
    a = np.minimum(va, vb)
    b = np.maximum(va, vb)
    L = mesh.edge_lengths
    if np.any(a <= 0):
        raise ValueError("boundary values must be positive")
    d = b - a
    rel = d / b
    tp = tau ** p if np.isfinite(tau) else np.inf
    # divided differences with stable small-gap forms
    with np.errstate(divide="ignore", invalid="ignore"):
        pow_dd = np.where(rel > 1e-8, (b ** p - a ** p) / d, p * a ** (p - 1) * (1 + 0.5 * (p - 1) * d / a))
        log_dd = np.where(rel > 1e-8, np.log(b / a) / d, (1 - 0.5 * d / a) / a)
        full = pow_dd / p ** 2  # tau >= b
        low = tp / p * log_dd  # tau <= a
        mid = (tp - a ** p) / (p ** 2 * d) + tp / p * np.log(b / tau) / d
    per_edge = np.where(tau >= b, full, np.where(tau <= a, low, mid))
    return float(np.sum(L * per_edge))


def verify_lemma33(u: ScalarField, p: float, beta: float, f, tau: float = np.inf, tol: float = 0.0) -> CheckRecord:
    """Boundary level-set integral against (1/(p beta)) int f*."""
    total_f = f.integral() if isinstance(f, ScalarField) else float(f)
    rhs = total_f / (p * beta)
    name = "boundary level integral"
    if u.mesh.boundary_edges.size and u.values[u.mesh.boundary_nodes].min() <= 1e-12 * max(u.max(), 0.0):
        return CheckRecord(name, None, rhs, tol, None, True, "boundary values vanish; integrand not integrable")
    lhs = boundary_level_integral(u, p, tau)
    return CheckRecord.inequality(name, lhs, rhs, tol)


def boundary_level_records(inst: Instance) -> list:
    """Boundary level integral up to tau = v_m and tau = inf against (1/(p beta)) int f*."""
    name = "boundary level integral"
    if not inst.converged:
        return [inst.inconclusive(f"{name} tau=v_m"), inst.inconclusive(f"{name} tau=inf")]
    fc, ff = (fs.integral() for fs in inst.source_profiles)
    rc, rf = fc / (inst.p * inst.beta), ff / (inst.p * inst.beta)
    out = []
    for label, taus in (("v_m", [v.v_m for v in inst.radial]), ("inf", [np.inf, np.inf])):
        try:
            lc, lf = (boundary_level_integral(u, inst.p, t) for u, t in zip(inst.solutions, taus))
        except ValueError:
            out.append(CheckRecord(f"{name} tau={label}", None, rf, 0.0, None, True,
                                   "boundary values vanish; integrand not integrable"))
            continue
        tol = RUNGE_FACTOR * (abs(lc - lf) + abs(rc - rf)) + FLOOR * max(abs(lf), abs(rf))
        rec = verify_lemma33(inst.solutions[1], inst.p, inst.beta, inst.sources[1], taus[1], tol)
        rec.name = f"{name} tau={label}"
        out.append(rec)
    return out


def radial_boundary_level_sides(v: RadialSolution, fstar_integral: float, tau: float = np.inf) -> tuple[float, float]:
    """Both sides of the radial identity: boundary integral is v_m^{p-1} Per / p for tau >= v_m."""
    t = min(tau, v.v_m)
    lhs = t ** v.p * v.ball.perimeter / (v.p * v.v_m)
    return lhs, fstar_integral / (v.p * v.beta)


def boundary_identity_record(inst: Instance) -> CheckRecord:
    """beta int_{bdry} u^{p-1} against int f (informational, two-sided)."""
    u = inst.solutions[1]
    lhs = inst.beta * boundary_integral(u, inst.p - 1, exact=False)
    rhs = inst.sources[1].integral()
    rec = CheckRecord("boundary flux identity", lhs, rhs, FLOOR * abs(rhs) + 1e-8 * abs(rhs))
    rec.passed = bool(abs(lhs - rhs) <= rec.tol)
    return rec


# -- Gronwall ---------------------------------------------------------------------

def gronwall_bound(xi0: float, tau0: float, p: float, C: float, tau: float) -> tuple[float, float]:
    """Upper bounds for xi(tau) and xi'(tau) when tau xi' <= (p-1) xi + C on [tau0, inf)."""
    if not tau0 > 0:
        raise ValueError("tau0 must be positive")
    if tau < tau0:
        raise ValueError("tau must be >= tau0")
    if C < 0:
        raise ValueError("C must be non-negative")
    if not p > 1:
        raise ValueError("p must be > 1")
    ratio = tau / tau0
    b1 = (xi0 + C / (p - 1)) * ratio ** (p - 1) - C / (p - 1)
    b2 = ((p - 1) * xi0 + C) / tau0 * ratio ** (p - 2)
    return b1, b2


# -- explicit two-ball examples ------------------------------------------------------

def counterexample_suite(radii=(0.05, 0.1, 0.2)) -> ComparisonReport:
    """Sup-norm and L^p reversals for the two-ball configuration."""
    rep = ComparisonReport("two-ball examples", 2, 2.0, 0.5, None)
    n, p, beta = 2, 2.0, 0.5
    coef = sup_shift_coefficient(n, p, beta)
    hs = []
    for r in radii:
        u_star, v, h = two_ball_solutions(TwoBallConfig(n, p, beta, r))
        hs.append(h)
        rep.checks.append(CheckRecord.inequality(f"sup-norm reversal sup v <= sup u r={r:g}", v.v_max, u_star.sup(), 0.0,
                                                 guaranteed=False))
        ratio = h / r ** n
        rec = CheckRecord(f"sup-norm shift (sup v - sup u)/r^n r={r:g}", ratio, coef, 0.1 * abs(coef),
                          bool(abs(ratio - coef) <= 0.1 * abs(coef)), False)
        rep.checks.append(rec)
    rr = np.asarray(radii, dtype=float) ** n
    fit = np.linalg.lstsq(np.column_stack([rr, rr ** 2]), np.asarray(hs), rcond=None)[0][0]
    rep.checks.append(CheckRecord("sup-norm shift fitted coefficient", float(fit), coef, 0.1 * abs(coef),
                                  bool(abs(fit - coef) <= 0.1 * abs(coef)), False))
    # outside the hypothesis on beta the sign is not claimed
    big = 2.0
    u_star, v, h = two_ball_solutions(TwoBallConfig(n, p, big, 0.05))
    rep.checks.append(CheckRecord(f"sup-norm reversal beta={big:g} informational", v.v_max, u_star.sup(), 0.0, None, False,
                                  "beta outside the range where the sign is claimed"))

    n3 = 3
    coef2 = lp_gap_coefficient(n3, p, beta)
    gaps = {}
    for r in (0.025,) + tuple(radii):
        gaps[r] = example2_lp_gap(TwoBallConfig(n3, p, beta, r))
    for r in radii:
        rep.checks.append(CheckRecord.inequality(f"lp gap ||v||_p^p - ||u||_p^p <= 0 n=3 r={r:g}",
                                                 gaps[r], 0.0, 0.0, guaranteed=False))
    ratios = [gaps[r] / r ** n3 for r in (0.05, 0.025)]
    spread = abs(ratios[0] - ratios[1]) / abs(ratios[1])
    rep.checks.append(CheckRecord("lp gap/r^n stability r=0.05 vs 0.025", spread, 0.15, 0.0,
                                  bool(spread <= 0.15), False))
    rep.checks.append(CheckRecord("lp gap/r^n at r=0.025 vs leading coefficient", ratios[1], coef2,
                                  0.05 * abs(coef2), bool(abs(ratios[1] - coef2) <= 0.05 * abs(coef2)), False))
    return rep


# -- plot data ------------------------------------------------------------------------

def export_plot_data(inst: Instance, directory, stem: str) -> None:
    """CSV files (t, mu, phi) and (s, u_sharp, v) for an instance."""
    from pathlib import Path
    d = Path(directory)
    mu, phi = inst.distributions[1], inst.radial_distributions[1]
    top = max(mu.support_end, phi.support_end)
    t = np.linspace(0.0, top, 401)
    write_profiles_csv(d / f"{stem}_levels.csv", ["t", "mu", "phi"], [t, mu(t), phi(t)])
    v = inst.radial[1]
    s = np.linspace(0.0, v.ball.R, 401)
    sig = np.pi * s ** 2
    write_profiles_csv(d / f"{stem}_radial.csv", ["s", "u_sharp", "v"], [s, inst.rearranged[1](sig), v(s)])
