"""Distribution functions, decreasing and Schwarz rearrangements, Lorentz norms.

Profiles are stored exactly as monotone parametric pieces.  On piece ``i`` both
coordinates are quadratics in a parameter tau in [0, 1], fixed by their values
at tau = 0, 1/2, 1.  Steps, the piecewise-quadratic distribution function of a
P1 field and its inverse all fit this form, so taking generalized inverses is
exact (swap coordinates, reverse the parameter).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import unit_ball_volume

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
# Gauss points on [0, 1] pushed through the cubic smoothstep, which damps
# square-root type behaviour at piece ends
_XI = 0.5 * (_GL_X + 1)
QUAD_TAU = _XI * _XI * (3 - 2 * _XI)
QUAD_WEIGHTS = 0.5 * _GL_W * 6 * _XI * (1 - _XI)


def _quad(v0, vm, v1, tau):
    return (v0 * 2 * (tau - 0.5) * (tau - 1) - vm * 4 * tau * (tau - 1)
            + v1 * 2 * tau * (tau - 0.5))


def _quad_slope(v0, vm, v1, tau):
    return (4 * vm - 3 * v0 - v1) + 2 * tau * 2 * (v0 + v1 - 2 * vm)


def _clip_mid(v0, vm, v1):
    """Keep the quadratic through (v0, vm, v1) monotone on [0, 1]."""
    lo = np.minimum(0.75 * v0 + 0.25 * v1, 0.25 * v0 + 0.75 * v1)
    hi = np.maximum(0.75 * v0 + 0.25 * v1, 0.25 * v0 + 0.75 * v1)
    return np.clip(vm, lo, hi)


@dataclass(frozen=True, eq=False)
class MonotoneProfile:
    """Right-continuous non-increasing non-negative function on [0, inf).

    Piece ``i`` covers ``[breakpoints[i], breakpoints[i+1])``; the function
    vanishes from ``breakpoints[-1]`` on.  ``values``, ``mid_values`` and
    ``end_values`` are the piece values at tau = 0, 1/2 and at the left limit
    tau -> 1; ``mid_breaks`` is the abscissa at tau = 1/2.
    ``domain_length`` bounds the abscissa and ``value_bound`` the values;
    the two swap under :meth:`generalized_inverse`.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    mid_breaks: np.ndarray = None
    mid_values: np.ndarray = None
    end_values: np.ndarray = None
    domain_length: float = None
    value_bound: float = None

    def __post_init__(self):
        x = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        y0 = np.asarray(self.values, dtype=float).reshape(-1)
        m = len(y0)
        if m == 0:
            x = np.zeros(1) if len(x) == 0 else x[:1]
        if len(x) != m + 1:
            raise ValueError("need one more breakpoint than pieces")
        if np.any(np.diff(x) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        xm = 0.5 * (x[:-1] + x[1:]) if self.mid_breaks is None else np.asarray(self.mid_breaks, float)
        y1 = y0.copy() if self.end_values is None else np.asarray(self.end_values, float).reshape(-1)
        ym = 0.5 * (y0 + y1) if self.mid_values is None else np.asarray(self.mid_values, float).reshape(-1)
        if not (len(xm) == len(ym) == len(y1) == m):
            raise ValueError("piece arrays have inconsistent lengths")
        seq = np.stack([y0, ym, y1], axis=1).reshape(-1)
        scale = float(np.max(np.abs(seq))) if m else 0.0
        if not np.all(np.isfinite(seq)) or not np.all(np.isfinite(x)):
            raise ValueError("profile must be finite")
        if m and (np.any(np.diff(seq) > 1e-12 * scale) or seq.min() < -1e-12 * scale):
            raise ValueError("profile must be non-negative and non-increasing")
        seq = np.maximum(np.minimum.accumulate(seq), 0.0).reshape(-1, 3) if m else np.zeros((0, 3))
        y0, ym, y1 = seq[:, 0], seq[:, 1], seq[:, 2]
        ym = _clip_mid(y0, ym, y1)
        xm = _clip_mid(x[:-1], xm, x[1:])
        dl = float(x[-1]) if self.domain_length is None else float(self.domain_length)
        if dl < x[-1] * (1 - 1e-12):
            raise ValueError("domain_length shorter than the support")
        vb = float(y0[0]) if (self.value_bound is None and m) else float(self.value_bound or 0.0)
        for name, arr in (("breakpoints", x), ("values", y0), ("mid_breaks", xm),
                          ("mid_values", ym), ("end_values", y1)):
            arr = np.array(arr, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "domain_length", max(dl, float(x[-1])))
        object.__setattr__(self, "value_bound", max(vb, float(y0[0]) if m else 0.0))

    # -- constructors ------------------------------------------------------

    @classmethod
    def step(cls, breakpoints, values, domain_length=None, value_bound=None) -> "MonotoneProfile":
        return cls(np.asarray(breakpoints, float), np.asarray(values, float),
                   domain_length=domain_length, value_bound=value_bound)

    @classmethod
    def zero(cls, domain_length: float = 0.0, value_bound: float = 0.0) -> "MonotoneProfile":
        return cls(np.zeros(1), np.zeros(0), domain_length=domain_length, value_bound=value_bound)

    @classmethod
    def from_samples(cls, x, y, x_mid, y_mid, domain_length=None, value_bound=None) -> "MonotoneProfile":
        """Continuous piecewise quadratic through samples at breakpoints and midpoints."""
        y = np.asarray(y, float)
        return cls(np.asarray(x, float), y[:-1], np.asarray(x_mid, float), np.asarray(y_mid, float),
                   y[1:], domain_length=domain_length, value_bound=value_bound)

    # -- basic queries -----------------------------------------------------

    @property
    def n_pieces(self) -> int:
        return len(self.values)

    @property
    def support_end(self) -> float:
        return float(self.breakpoints[-1]) if self.n_pieces else 0.0

    @property
    def is_step(self) -> bool:
        return bool(np.all(self.values == self.end_values) and np.all(self.values == self.mid_values))

    def sup(self) -> float:
        return float(self.values[0]) if self.n_pieces else 0.0

    def _pieces(self, idx=None):
        x = self.breakpoints
        sl = slice(None) if idx is None else idx
        return (x[:-1][sl], self.mid_breaks[sl], x[1:][sl],
                self.values[sl], self.mid_values[sl], self.end_values[sl])

    def _tau(self, i: np.ndarray, xq: np.ndarray) -> np.ndarray:
        x0, xm, x1 = self.breakpoints[i], self.mid_breaks[i], self.breakpoints[i + 1]
        b = 4 * xm - 3 * x0 - x1
        c = 2 * (x0 + x1 - 2 * xm)
        d = np.maximum(xq - x0, 0.0)
        den = b + np.sqrt(np.maximum(b * b + 4 * c * d, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.where(den > 0, 2 * d / den, 0.0)
        return np.clip(tau, 0.0, 1.0)

    def __call__(self, xq) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        out = np.zeros(xq.shape)
        if self.n_pieces == 0:
            return out
        flat = xq.reshape(-1)
        res = out.reshape(-1)
        inside = flat < self.breakpoints[-1]
        res[flat < self.breakpoints[0]] = self.values[0]
        sel = inside & (flat >= self.breakpoints[0])
        i = np.searchsorted(self.breakpoints, flat[sel], side="right") - 1
        tau = self._tau(i, flat[sel])
        res[sel] = _quad(self.values[i], self.mid_values[i], self.end_values[i], tau)
        return out

    # -- inversion ---------------------------------------------------------

    def generalized_inverse(self) -> "MonotoneProfile":
        """t -> |{x : g(x) > t}|, which is again right-continuous and non-increasing."""
        m = self.n_pieces
        if m == 0 or self.values[0] <= 0:
            return MonotoneProfile.zero(self.value_bound, self.domain_length)
        x0, xm, x1, y0, ym, y1 = self._pieces()
        # for each piece (taken from the right): the piece itself, then the jump above it
        t0 = np.empty((m, 2))
        tm = np.empty((m, 2))
        t1 = np.empty((m, 2))
        v0 = np.empty((m, 2))
        vm = np.empty((m, 2))
        v1 = np.empty((m, 2))
        keep = np.empty((m, 2), dtype=bool)
        t0[:, 0], tm[:, 0], t1[:, 0] = y1, ym, y0
        v0[:, 0], vm[:, 0], v1[:, 0] = x1, xm, x0
        keep[:, 0] = y0 > y1
        gap_lo = y0
        gap_hi = np.concatenate([[np.inf], y1[:-1]])
        t0[:, 1], t1[:, 1] = gap_lo, gap_hi
        tm[:, 1] = 0.5 * (gap_lo + gap_hi)
        v0[:, 1] = v1[:, 1] = vm[:, 1] = x0
        keep[:, 1] = gap_hi > gap_lo
        keep[0, 1] = False
        order = np.arange(m)[::-1]
        arrays = [a[order].reshape(-1)[keep[order].reshape(-1)] for a in (t0, tm, t1, v0, vm, v1)]
        if y1[-1] > 0:
            tail = [np.array([0.0]), np.array([0.5 * y1[-1]]), np.array([y1[-1]]),
                    np.array([x1[-1]]), np.array([x1[-1]]), np.array([x1[-1]])]
            arrays = [np.concatenate([a, b]) for a, b in zip(tail, arrays)]
        t0, tm, t1, v0, vm, v1 = arrays
        breaks = np.concatenate([t0, t1[-1:]])
        return MonotoneProfile(breaks, v0, tm, vm, v1,
                               domain_length=self.value_bound, value_bound=self.domain_length)

    # -- integrals ---------------------------------------------------------

    def integral(self, power: float = 1.0) -> float:
        """int_0^inf g(x)^power dx."""
        if self.n_pieces == 0:
            return 0.0
        x0, xm, x1, y0, ym, y1 = self._pieces()
        const = (y0 == y1) & (y0 == ym)
        total = float(np.sum(y0[const] ** power * (x1[const] - x0[const])))
        nc = ~const
        if np.any(nc):
            tau = QUAD_TAU[None, :]
            y = _quad(y0[nc, None], ym[nc, None], y1[nc, None], tau)
            dx = _quad_slope(x0[nc, None], xm[nc, None], x1[nc, None], tau)
            total += float(np.sum(np.maximum(y, 0) ** power * dx * QUAD_WEIGHTS))
        return total

    def cumulative(self, xq) -> np.ndarray:
        """int_0^x g for each query point."""
        xq = np.asarray(xq, dtype=float)
        out = np.zeros(xq.shape)
        m = self.n_pieces
        if m == 0:
            return out
        x0, xm, x1, y0, ym, y1 = self._pieces()
        flat = np.clip(xq.reshape(-1), self.breakpoints[0], self.breakpoints[-1])
        i = np.minimum(np.searchsorted(self.breakpoints, flat, side="right") - 1, m - 1)
        res = out.reshape(-1)
        if self.is_step:
            cum = np.concatenate([[0.0], np.cumsum(y0 * (x1 - x0))])
            res[:] = cum[i] + y0[i] * (flat - x0[i])
            return out
        gx, gw = np.polynomial.legendre.leggauss(4)
        gx = 0.5 * (gx + 1)
        gw = 0.5 * gw
        piece = np.sum(_quad(y0[:, None], ym[:, None], y1[:, None], gx)
                       * _quad_slope(x0[:, None], xm[:, None], x1[:, None], gx) * gw, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(piece)])
        tau = self._tau(i, flat)
        s = tau[:, None] * gx[None, :]
        part = tau * np.sum(_quad(y0[i, None], ym[i, None], y1[i, None], s)
                            * _quad_slope(x0[i, None], xm[i, None], x1[i, None], s) * gw, axis=1)
        res[:] = cum[i] + part
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["breakpoint", "value"])
            for x, y in zip(self.breakpoints[:-1], self.values):
                w.writerow([f"{x:.17g}", f"{y:.17g}"])
            if self.n_pieces:
                w.writerow([f"{self.breakpoints[-1]:.17g}", "0"])


def graded_nodes(breaks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points and weights on each interval of a sorted break list."""
    a = breaks[:-1, None]
    L = np.diff(breaks)[:, None]
    return (a + L * QUAD_TAU).reshape(-1), (L * QUAD_WEIGHTS).reshape(-1)


def integrate_product(f: MonotoneProfile, g: MonotoneProfile, upper: float | None = None) -> float:
    """int_0^upper f g over the merged piece structure of both profiles."""
    end = min(f.support_end, g.support_end)
    if upper is not None:
        end = min(end, upper)
    if end <= 0:
        return 0.0
    br = np.union1d(f.breakpoints, g.breakpoints)
    br = np.unique(np.concatenate([br[(br > 0) & (br < end)], [0.0, end]]))
    x, w = graded_nodes(br)
    return float(np.sum(f(x) * g(x) * w))


# -- sources of profiles ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StepFunction:
    """Function taking value ``values[i]`` on a cell of measure ``weights[i]``."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float).reshape(-1)
        w = np.asarray(self.weights, float).reshape(-1)
        if v.shape != w.shape or np.any(w <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("step function needs finite values and positive weights of equal length")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def lp_norm(self, p: float) -> float:
        return float(np.sum(self.weights * np.abs(self.values) ** p)) ** (1 / p)


@dataclass(frozen=True)
class LorentzIndex:
    a: float
    q: float

    def __post_init__(self):
        if not (self.a > 0 and self.q > 0):
            raise ValueError("Lorentz indices must be positive")


def _step_distribution(u: StepFunction) -> MonotoneProfile:
    a = np.abs(u.values)
    levels = np.unique(np.concatenate([[0.0], a]))
    # measure of {|u| > t} on [levels[j], levels[j+1])
    order = np.argsort(a)
    sa, sw = a[order], u.weights[order]
    tail = np.concatenate([np.cumsum(sw[::-1])[::-1], [0.0]])
    idx = np.searchsorted(sa, levels[:-1], side="right")
    mu = tail[idx]
    return MonotoneProfile.step(levels, mu, domain_length=float(levels[-1]), value_bound=u.measure)


def _superlevel_area(lo, mid, hi, area, t, chunk=20000):
    """sum over triangles of |{w > t}| for the P1 field with sorted vertex values."""
    res = np.zeros(len(t))
    order = np.argsort(lo, kind="stable")
    lo_s = lo[order]
    suffix = np.concatenate([np.cumsum(area[order][::-1])[::-1], [0.0]])
    # triangles entirely above t
    res += suffix[np.searchsorted(lo_s, t, side="right")]
    for s in range(0, len(lo), chunk):
        a, b, c, A = lo[s:s + chunk], mid[s:s + chunk], hi[s:s + chunk], area[s:s + chunk]
        i0 = np.searchsorted(t, a, side="left")
        i1 = np.searchsorted(t, c, side="left")
        cnt = i1 - i0
        if cnt.sum() == 0:
            continue
        tri = np.repeat(np.arange(len(a)), cnt)
        start = np.repeat(i0 - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
        k = start + np.arange(len(tri))
        tk = t[k]
        ta, tb, tc, tA = a[tri], b[tri], c[tri], A[tri]
        lower = tk < tb
        with np.errstate(divide="ignore", invalid="ignore"):
            v_lo = tA - tA * (tk - ta) ** 2 / ((tb - ta) * (tc - ta))
            v_hi = tA * (tc - tk) ** 2 / ((tc - ta) * (tc - tb))
        val = np.where(lower, v_lo, v_hi)
        res += np.bincount(k, weights=val, minlength=len(t))
    return res


def _field_distribution(u, levels: int = 256) -> MonotoneProfile:
    mesh = u.mesh
    vals = u.values
    top = float(np.max(np.abs(vals))) if len(vals) else 0.0
    if top == 0.0:
        return MonotoneProfile.zero(0.0, mesh.area)
    tri_vals = np.sort(vals[mesh.triangles], axis=1)
    knots = np.unique(np.concatenate([[0.0], np.abs(vals), np.linspace(0.0, top, levels + 2)]))
    knots = knots[knots <= top]
    t0, t1 = knots[:-1], knots[1:]
    dt = t1 - t0
    probe = np.stack([t0 + 0.25 * dt, t0 + 0.5 * dt, t0 + 0.75 * dt], axis=1).reshape(-1)
    areas = mesh.areas
    total = _superlevel_area(tri_vals[:, 0], tri_vals[:, 1], tri_vals[:, 2], areas, probe)
    neg = -tri_vals[:, ::-1]
    if np.any(neg[:, 2] > 0):
        total += _superlevel_area(neg[:, 0], neg[:, 1], neg[:, 2], areas, probe)
    q = total.reshape(-1, 3)
    a, b, c = q[:, 0], q[:, 1], q[:, 2]
    # the piece is an exact quadratic on each knot interval; recover its end values
    y0 = 3 * a - 3 * b + c
    y1 = a - 3 * b + 3 * c
    scale = mesh.area
    y0 = np.clip(y0, 0.0, scale)
    y1 = np.clip(y1, 0.0, scale)
    seq = np.maximum(np.minimum.accumulate(np.stack([y0, b, y1], axis=1).reshape(-1)), 0.0)
    seq = seq.reshape(-1, 3)
    return MonotoneProfile(knots, seq[:, 0], 0.5 * (t0 + t1), seq[:, 1], seq[:, 2],
                           domain_length=top, value_bound=mesh.area)


Rearrangeable = Union[StepFunction, "ScalarField"]  # noqa: F821


def distribution_function(u, levels: int = 256) -> MonotoneProfile:
    """mu(t) = |{|u| > t}| for a P1 field (exact) or a step function."""
    if isinstance(u, StepFunction):
        return _step_distribution(u)
    return _field_distribution(u, levels)


def decreasing_rearrangement(mu: MonotoneProfile) -> MonotoneProfile:
    return mu.generalized_inverse()


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Radial function s -> star(omega_n s^n) on the ball of radius ``radius``."""

    n: int
    radius: float
    star: MonotoneProfile

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.star(unit_ball_volume(self.n) * np.abs(s) ** self.n)

    def lp_norm(self, p: float) -> float:
        return self.star.integral(p) ** (1 / p)


def schwarz_profile(ustar: MonotoneProfile, n: int) -> RadialProfile:
    radius = (ustar.domain_length / unit_ball_volume(n)) ** (1 / n)
    return RadialProfile(n, radius, ustar)


def lorentz_norm(mu: MonotoneProfile, idx: LorentzIndex) -> float:
    """Lorentz (quasi-)norm from the distribution function.

    For finite q this is a^{1/q} (int t^{q-1} mu(t)^{q/a} dt)^{1/q}.  For
    q = inf the value returned is sup_t t^a mu(t) (no 1/a power).
    """
    a, q = float(idx.a), float(idx.q)
    if mu.n_pieces == 0:
        return 0.0
    x0, xm, x1, y0, ym, y1 = mu._pieces()
    if np.isinf(q):
        tau = np.linspace(0.0, 1.0, 65)[None, :]
        t = _quad(x0[:, None], xm[:, None], x1[:, None], tau)
        y = _quad(y0[:, None], ym[:, None], y1[:, None], tau)
        return float(np.max(t ** a * np.maximum(y, 0)))
    e = q / a
    const = (y0 == y1) & (y0 == ym)
    total = float(np.sum(y0[const] ** e * (x1[const] ** q - x0[const] ** q))) / q
    nc = ~const
    if np.any(nc):
        tau = QUAD_TAU[None, :]
        t = _quad(x0[nc, None], xm[nc, None], x1[nc, None], tau)
        y = np.maximum(_quad(y0[nc, None], ym[nc, None], y1[nc, None], tau), 0.0)
        dt = _quad_slope(x0[nc, None], xm[nc, None], x1[nc, None], tau)
        total += float(np.sum(t ** (q - 1) * y ** e * dt * QUAD_WEIGHTS))
    return a ** (1 / q) * total ** (1 / q)


def hardy_littlewood_check(h, g) -> tuple[float, float]:
    """Return (int |h g|, int_0^|Omega| h* g*).

    P1 fields are taken through the interpolants of their absolute nodal
    values, for which the left side is exact.
    """
    if isinstance(h, StepFunction):
        if not isinstance(g, StepFunction) or len(h.values) != len(g.values):
            raise ValueError("step functions must share their cells")
        lhs = float(np.sum(h.weights * np.abs(h.values * g.values)))
        ha, ga = h, g
    else:
        if h.mesh is not g.mesh:
            raise ValueError("fields live on different meshes")
        from .fem import ScalarField, operators
        ha = ScalarField(h.mesh, np.abs(h.values))
        ga = ScalarField(g.mesh, np.abs(g.values))
        lhs = float(ha.values @ (operators(h.mesh).mass @ ga.values))
    hs = decreasing_rearrangement(distribution_function(ha))
    gs = decreasing_rearrangement(distribution_function(ga))
    return lhs, integrate_product(hs, gs)


def write_profiles_csv(path, header: list, columns: list) -> None:
    """Write equal-length columns with 17 significant digits."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([f"{float(v):.17g}" for v in row])
