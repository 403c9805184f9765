"""Radial solutions of the symmetrized Robin problem and explicit ball solutions.

For a radial non-increasing source the solution on the ball B_R satisfies

    |v'(s)|^{p-1} n omega_n s^{n-1} = F(omega_n s^n),   F(x) = int_0^x f*,

and the Robin condition fixes v(R) = |v'(R)| / beta^{1/(p-1)}.  Everything
else is a one dimensional integral of |v'|.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import Ball, unit_ball_volume
from .rearrangement import MonotoneProfile, RadialProfile, write_profiles_csv

_GX, _GW = np.polynomial.legendre.leggauss(8)
_GX = 0.5 * (_GX + 1)
_GW = 0.5 * _GW

RADIAL_CELLS = 8192


def graded_grid(R: float, cells: int, start: float = 0.0) -> np.ndarray:
    """Points on [start, R] clustered at both ends (quintic smoothstep)."""
    xi = np.linspace(0.0, 1.0, cells + 1)
    w = xi ** 3 * (10 - 15 * xi + 6 * xi ** 2)
    g = start + (R - start) * w
    g[0], g[-1] = start, R
    return g


@dataclass(frozen=True, eq=False)
class RadialSolution:
    """Radial profile v on [0, R] with its rearranged form.

    ``star`` is v as a function of the ball volume omega_n s^n, i.e. the
    decreasing rearrangement of v.
    """

    ball: Ball
    p: float
    beta: float
    s: np.ndarray
    v: np.ndarray
    star: MonotoneProfile = field(repr=False)
    evaluator: Callable = field(repr=False)
    slope: Callable = field(repr=False)

    @property
    def v_m(self) -> float:
        return float(self.v[-1])

    @property
    def v_max(self) -> float:
        return float(self.v[0])

    def __call__(self, s) -> np.ndarray:
        return self.evaluator(np.asarray(s, dtype=float))

    def derivative_abs(self, s) -> np.ndarray:
        """|v'(s)|."""
        return self.slope(np.asarray(s, dtype=float))

    @property
    def profile(self) -> RadialProfile:
        return RadialProfile(self.ball.n, self.ball.R, self.star)

    def distribution(self) -> MonotoneProfile:
        return self.star.generalized_inverse()

    def robin_residual(self) -> float:
        """|v'(R)|^{p-2} v'(R) + beta v(R)^{p-1} with v' <= 0."""
        d = float(self.derivative_abs(self.ball.R))
        return -d ** (self.p - 1) + self.beta * self.v_m ** (self.p - 1)

    def lp_norm(self, q: float) -> float:
        return self.star.integral(q) ** (1 / q)

    def to_csv(self, path) -> None:
        write_profiles_csv(path, ["s", "v"], [self.s, self.v])


def _star_from_radial(n: int, s: np.ndarray, v: np.ndarray, evaluate: Callable,
                      volume: float) -> MonotoneProfile:
    omega = unit_ball_volume(n)
    sig = omega * s ** n
    # parametrize each piece by the radius so that sigma(tau) is exact for n = 2
    s_mid = 0.5 * (s[:-1] + s[1:])
    sig_mid = omega * s_mid ** n
    v_mid = evaluate(s_mid)
    return MonotoneProfile.from_samples(sig, v, sig_mid, v_mid, domain_length=volume)


def _validate(p: float, beta: float):
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")


def solve_radial(ball: Ball, p: float, beta: float, fstar: MonotoneProfile,
                 cells: int = RADIAL_CELLS) -> RadialSolution:
    """Radial solution on ``ball`` for the rearranged source ``fstar``."""
    _validate(p, beta)
    n, R = ball.n, ball.R
    vol = ball.volume
    if fstar.support_end > vol * (1 + 1e-12):
        raise ValueError("source profile extends beyond the ball volume")
    omega = unit_ball_volume(n)
    alpha = 1.0 / (p - 1)

    def slope(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        pos = s > 0
        sp = s[pos]
        F = fstar.cumulative(omega * sp ** n)
        out[pos] = (np.maximum(F, 0.0) / (n * omega * sp ** (n - 1))) ** alpha
        return out

    knots = fstar.breakpoints[1:] if fstar.n_pieces else np.zeros(0)
    knot_r = (knots[(knots > 0) & (knots < vol)] / omega) ** (1 / n)
    grid = np.unique(np.concatenate([graded_grid(R, cells), knot_r]))
    a, b = grid[:-1], grid[1:]
    pts = a[:, None] + (b - a)[:, None] * _GX
    cell_int = np.sum(slope(pts) * _GW, axis=1) * (b - a)
    v_R = float(slope(np.array([R]))[0]) / beta ** alpha
    tail = np.concatenate([np.cumsum(cell_int[::-1])[::-1], [0.0]])
    v = v_R + tail

    def evaluate(s):
        s = np.asarray(s, dtype=float)
        flat = np.clip(s.reshape(-1), 0.0, R)
        i = np.clip(np.searchsorted(grid, flat, side="right") - 1, 0, len(grid) - 2)
        hi = grid[i + 1]
        q = flat[:, None] + (hi - flat)[:, None] * _GX
        part = np.sum(slope(q) * _GW, axis=1) * (hi - flat)
        return (v[i + 1] + part).reshape(s.shape)

    star = _star_from_radial(n, grid, v, evaluate, vol)
    return RadialSolution(ball, p, beta, grid, v, star, evaluate, slope)


def constant_source(volume: float, value: float = 1.0) -> MonotoneProfile:
    if value == 0.0:
        return MonotoneProfile.zero(volume, 0.0)
    return MonotoneProfile.step([0.0, volume], [value], domain_length=volume)


# -- explicit solutions ---------------------------------------------------------

def _ball_formula(n: int, p: float, beta: float):
    alpha = 1.0 / (p - 1)
    lead = (p - 1) / (n ** alpha * p)
    base = 1.0 / (n * beta) ** alpha

    def value(s):
        return lead * (1 - np.abs(s) ** (p / (p - 1))) + base

    def slope(s):
        return (np.abs(s) / n) ** alpha

    return value, slope


def closed_form_ball(n: int, p: float, beta: float, R: float = 1.0, cells: int = RADIAL_CELLS) -> RadialSolution:
    """Exact solution for f = 1 on the unit ball."""
    _validate(p, beta)
    if R != 1.0:
        raise ValueError("the explicit ball solution is only available for R = 1")
    ball = Ball(n, 1.0)
    value, slope = _ball_formula(n, p, beta)
    grid = graded_grid(1.0, cells)
    v = value(grid)
    star = _star_from_radial(n, grid, v, value, ball.volume)
    return RadialSolution(ball, p, beta, grid, v, star, value, slope)


@dataclass(frozen=True)
class TwoBallConfig:
    """Source 1 on the unit ball and 0 on a disjoint ball of radius r."""

    n: int
    p: float
    beta: float
    r: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        _validate(self.p, self.beta)
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")

    @property
    def alpha(self) -> float:
        return 1.0 / (self.p - 1)

    @property
    def r_bar(self) -> float:
        return (1 + self.r ** self.n) ** (1 / self.n)


def _pow_diff(a, b, e):
    """(a^e - b^e)/e, continuous at e = 0 where it equals log(a/b)."""
    if e == 0:
        return np.log(a / b)
    return b ** e * np.expm1(e * np.log(a / b)) / e


def two_ball_shift(cfg: TwoBallConfig) -> float:
    """The constant h with v = u + h on the unit ball."""
    n, p, beta, alpha = cfg.n, cfg.p, cfg.beta, cfg.alpha
    lr = np.log1p(cfg.r ** n) / n  # log r_bar
    e = (p - n) / (p - 1)
    robin = np.expm1(-(n - 1) / (p - 1) * lr) / (n * beta) ** alpha
    if e == 0:
        annulus = lr
    else:
        annulus = np.expm1(e * lr) / e
    return float(robin + annulus / n ** alpha)


def two_ball_solutions(cfg: TwoBallConfig, cells: int = RADIAL_CELLS) -> tuple[MonotoneProfile, RadialSolution, float]:
    """(u*, v, h): rearranged solution on the two balls, symmetrized solution, shift.

    For p = n the annulus branch is the logarithmic limit of the general one.
    """
    n, p, beta, alpha = cfg.n, cfg.p, cfg.beta, cfg.alpha
    omega = unit_ball_volume(n)
    rb = cfg.r_bar
    h = two_ball_shift(cfg)
    u_value, u_slope = _ball_formula(n, p, beta)
    e = (p - n) / (p - 1)
    rb_term = rb ** (-(n - 1) / (p - 1)) / (n * beta) ** alpha

    def v_value(s):
        s = np.abs(np.asarray(s, dtype=float))
        inner = u_value(np.minimum(s, 1.0)) + h
        outer = rb_term + _pow_diff(rb, np.maximum(s, 1.0), e) / n ** alpha
        return np.where(s < 1.0, inner, outer)

    def v_slope(s):
        s = np.abs(np.asarray(s, dtype=float))
        return np.where(s < 1.0, (s / n) ** alpha, np.maximum(s, 1.0) ** (-(n - 1) / (p - 1)) / n ** alpha)

    ball = Ball(n, rb)
    grid = np.concatenate([graded_grid(1.0, cells), graded_grid(rb, max(cells // 8, 16), 1.0)[1:]])
    v = v_value(grid)
    star = _star_from_radial(n, grid, v, v_value, ball.volume)
    vsol = RadialSolution(ball, p, beta, grid, v, star, v_value, v_slope)

    ug = graded_grid(1.0, cells)
    u_star = _star_from_radial(n, ug, u_value(ug), u_value, omega * rb ** n)
    return u_star, vsol, h


def sup_shift_coefficient(n: int, p: float, beta: float) -> float:
    """Leading coefficient of h / r^n as r -> 0."""
    alpha = 1.0 / (p - 1)
    return -(n - 1) / (n * (p - 1)) / (n * beta) ** alpha + 1.0 / n ** (alpha + 1)


def _ball_power_integral(n: int, fn: Callable, cells: int = 256, a: float = 0.0, b: float = 1.0) -> float:
    """n omega_n int_a^b fn(s) s^{n-1} ds by graded composite Gauss."""
    g = graded_grid(b, cells, a)
    lo, hi = g[:-1], g[1:]
    pts = lo[:, None] + (hi - lo)[:, None] * _GX
    val = fn(pts) * pts ** (n - 1)
    return float(n * unit_ball_volume(n) * np.sum(np.sum(val * _GW, axis=1) * (hi - lo)))


def lp_gap_coefficient(n: int, p: float, beta: float) -> float:
    """Leading coefficient of (||v||_p^p - ||u||_p^p) / r^n as r -> 0."""
    alpha = 1.0 / (p - 1)
    u_value, _ = _ball_formula(n, p, beta)
    norm_pm1 = _ball_power_integral(n, lambda s: u_value(s) ** (p - 1))
    return p * norm_pm1 * sup_shift_coefficient(n, p, beta) + unit_ball_volume(n) / (n * beta) ** (alpha * p)


def example2_lp_gap(cfg: TwoBallConfig) -> float:
    """||v||_p^p - ||u||_p^p for the two-ball configuration with p < n."""
    n, p, beta = cfg.n, cfg.p, cfg.beta
    if p >= n:
        raise ValueError("the L^p gap example requires p < n")
    bound = ((n - p) / (p * (p - 1))) ** (p - 1)
    if beta > bound:
        raise ValueError(f"beta must be <= {bound!r} for this example")
    u_star, vsol, h = two_ball_solutions(cfg, cells=64)
    u_value, _ = _ball_formula(n, p, beta)

    def inner(s):
        u = u_value(s)
        return u ** p * np.expm1(p * np.log1p(h / u))

    gap_inner = _ball_power_integral(n, inner)
    gap_outer = _ball_power_integral(n, lambda s: vsol(s) ** p, cells=16, a=1.0, b=cfg.r_bar)
    return gap_inner + gap_outer
