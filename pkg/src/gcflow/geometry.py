"""Gauss equation integration, metric grids and hypothesis checks.

In geodesic coordinates the metric is B^2 dx^2 + dt^2 and the curvature
K = -k^2 enters through B_tt = k^2 B.  Each x column is integrated with the
classical RK4 scheme; the x-derivatives B_x, B_xx are carried along as
variational equations driven by the analytic partials of k, so no finite
differences in x are needed (they are still available as a cross-check).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .profiles import CurvatureProfile

OVERFLOW = 1e150


class MetricSample(NamedTuple):
    B: np.ndarray
    B_t: np.ndarray
    B_x: np.ndarray
    B_xt: np.ndarray
    B_xx: np.ndarray


def _hermite(y0, d0, y1, d1, s, h):
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)


@dataclass
class MetricGrid:
    """B(x, t) and its partials sampled on a rectangular (t, x) grid.

    Arrays are indexed ``[j_t, i_x]``.  ``valid_count[i]`` is the number of
    leading t-nodes that are finite for column i (overflow truncation).
    The ``*_tt``-type arrays are optional; when present, sampling between
    t-nodes uses cubic Hermite interpolation, otherwise linear.
    """

    xs: np.ndarray
    ts: np.ndarray
    B: np.ndarray
    B_t: np.ndarray
    B_x: np.ndarray
    B_xt: np.ndarray
    B_xx: np.ndarray
    B_tt: np.ndarray | None = None
    B_xtt: np.ndarray | None = None
    B_xxt: np.ndarray | None = None
    valid_count: np.ndarray | None = None
    periodic_x: bool = False

    def __post_init__(self):
        if self.valid_count is None:
            self.valid_count = np.full(len(self.xs), len(self.ts), dtype=int)

    def take_columns(self, idx) -> "MetricGrid":
        """Grid restricted to the x-columns ``idx`` (e.g. a slice for coarsening)."""
        def cut(a):
            return None if a is None else a[:, idx]
        return MetricGrid(self.xs[idx], self.ts, self.B[:, idx], self.B_t[:, idx],
                          self.B_x[:, idx], self.B_xt[:, idx], self.B_xx[:, idx],
                          cut(self.B_tt), cut(self.B_xtt), cut(self.B_xxt),
                          self.valid_count[idx], False)

    # basic derived fields
    @property
    def det_g(self):
        return self.B ** 2

    @property
    def t_valid_max(self) -> float:
        """Last t at which every column is still valid."""
        n = int(self.valid_count.min())
        return float(self.ts[n - 1]) if n > 0 else -math.inf

    @property
    def log_diag(self) -> dict:
        B = self.B
        bx = self.B_x / B
        return {
            "dx_lnB": bx,
            "dxx_lnB": self.B_xx / B - bx ** 2,
            "BdxdtlnB": self.B_xt - self.B_x * self.B_t / B,
            "Bt_over_B": self.B_t / B,
        }

    def fd_log_diag(self) -> dict:
        """Same diagnostics but with x-derivatives from centered differences."""
        lnB = np.log(self.B)
        edge = 2 if len(self.xs) > 2 else 1
        d1 = np.gradient(lnB, self.xs, axis=1, edge_order=edge)
        d2 = np.gradient(d1, self.xs, axis=1, edge_order=edge)
        dt = np.gradient(self.B_t / self.B, self.xs, axis=1, edge_order=edge)
        return {"dx_lnB": d1, "dxx_lnB": d2, "BdxdtlnB": self.B * dt,
                "Bt_over_B": self.B_t / self.B}

    # interpolation in t
    def _locate(self, t):
        ts = self.ts
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-9 * max(1.0, abs(ts[-1])):
            raise ValueError(f"t={t} outside metric grid [{ts[0]}, {ts[-1]}]")
        j = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        h = ts[j + 1] - ts[j]
        return j, h, (t - ts[j]) / h

    def sample(self, t: float) -> MetricSample:
        """All five fields at time t for every x column."""
        j, h, s = self._locate(t)
        if self.B_tt is not None:
            def H(y, d):
                return _hermite(y[j], d[j], y[j + 1], d[j + 1], s, h)
            return MetricSample(
                H(self.B, self.B_t), H(self.B_t, self.B_tt),
                H(self.B_x, self.B_xt), H(self.B_xt, self.B_xtt),
                H(self.B_xx, self.B_xxt))

        def lin(y):
            return (1 - s) * y[j] + s * y[j + 1]
        return MetricSample(lin(self.B), lin(self.B_t), lin(self.B_x),
                            lin(self.B_xt), lin(self.B_xx))

    def sample_points(self, x, t, periodic_period: float | None = None):
        """(B, B_t) at scattered points: Hermite in t, linear in x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        xs, ts = self.xs, self.ts
        if np.any(t < ts[0] - 1e-12) or np.any(t > ts[-1] * (1 + 1e-12) + 1e-12):
            raise ValueError("points outside metric grid in t")
        j = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        h = ts[j + 1] - ts[j]
        s = (t - ts[j]) / h
        if len(xs) == 1:
            i0 = i1 = np.zeros_like(j)
            wx = np.zeros_like(t)
        elif periodic_period is not None:
            dx = xs[1] - xs[0]
            u = np.mod(x - xs[0], periodic_period) / dx
            i0 = np.floor(u).astype(int) % len(xs)
            i1 = (i0 + 1) % len(xs)
            wx = u - np.floor(u)
        else:
            i0 = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
            i1 = i0 + 1
            wx = (x - xs[i0]) / (xs[i1] - xs[i0])

        def col(i):
            B0, B1 = self.B[j, i], self.B[j + 1, i]
            D0, D1 = self.B_t[j, i], self.B_t[j + 1, i]
            if self.B_tt is None:
                return (1 - s) * B0 + s * B1, (1 - s) * D0 + s * D1
            E0, E1 = self.B_tt[j, i], self.B_tt[j + 1, i]
            return _hermite(B0, D0, B1, D1, s, h), _hermite(D0, E0, D1, E1, s, h)

        b0, bt0 = col(i0)
        b1, bt1 = col(i1)
        return (1 - wx) * b0 + wx * b1, (1 - wx) * bt0 + wx * bt1

    def rows(self):
        """Rows for the metric CSV export."""
        d = self.log_diag
        T, X = np.meshgrid(self.ts, self.xs, indexing="ij")
        cols = [X, T, self.B, self.B_t, d["dx_lnB"], d["dxx_lnB"], d["BdxdtlnB"]]
        return [c.ravel() for c in cols]


METRIC_HEADER = "x,t,B,B_t,dx_lnB,dxx_lnB,BdxdtlnB"


def _gauss_rhs(profile, xs, t, Y):
    c = profile.evaluate(xs, np.full_like(xs, t), check=False)
    k2 = c.k * c.k
    dk2 = 2 * c.k * c.k_x
    ddk2 = 2 * c.k_x ** 2 + 2 * c.k * c.k_xx
    B, Bt, Bx, Bxt, Bxx, Bxxt = Y
    return np.array([Bt, k2 * B, Bxt, dk2 * B + k2 * Bx,
                     Bxxt, ddk2 * B + 2 * dk2 * Bx + k2 * Bxx])


def _integrate_gauss(profile, xs, ts, Y0, dt_sub, growth):
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise ValueError("ts must be strictly increasing")
    nt, nx = len(ts), len(xs)
    out = np.full((nt, 6, nx), np.nan)
    Y = np.array(Y0, dtype=float)
    out[0] = Y
    alive = np.ones(nx, dtype=bool)
    valid = np.full(nx, nt, dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(nt - 1):
            ta, tb = ts[j], ts[j + 1]
            hmax = max(dt_sub, growth * abs(ta))
            n = max(1, math.ceil((tb - ta) / hmax - 1e-12))
            h = (tb - ta) / n
            t = ta
            for _ in range(n):
                k1 = _gauss_rhs(profile, xs, t, Y)
                k2 = _gauss_rhs(profile, xs, t + h / 2, Y + h / 2 * k1)
                k3 = _gauss_rhs(profile, xs, t + h / 2, Y + h / 2 * k2)
                k4 = _gauss_rhs(profile, xs, t + h, Y + h * k3)
                Y = Y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                t += h
            bad = alive & ~(np.all(np.isfinite(Y), axis=0) & (np.abs(Y[0]) < OVERFLOW))
            if bad.any():
                valid[bad] = j + 1
                alive &= ~bad
            Y[:, ~alive] = np.nan
            out[j + 1] = Y
            if not alive.any():
                break
    return out, valid


def _second_t_derivatives(profile, xs, ts, out):
    T, X = np.meshgrid(ts, xs, indexing="ij")
    c = profile.evaluate(X, T, check=False)
    k2 = c.k ** 2
    dk2 = 2 * c.k * c.k_x
    B, Bx = out[:, 0], out[:, 2]
    return k2 * B, dk2 * B + k2 * Bx


def solve_gauss_equation(profile: CurvatureProfile, xs, ts, dt_sub: float = 0.01,
                         growth: float = 0.0, periodic_x: bool = False) -> MetricGrid:
    """Integrate B_tt = k^2 B with B(x,0)=1, B_t(x,0)=0 per column.

    The substep is ``max(dt_sub, growth*t)``; a positive ``growth`` lets long
    tails (t up to 1e4 and beyond) be covered with geometric step growth.
    Columns whose B exceeds 1e150 are truncated (see ``valid_count``).
    """
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if ts[0] != 0.0:
        raise ValueError("ts must start at 0")
    nx = len(xs)
    Y0 = np.zeros((6, nx))
    Y0[0] = 1.0
    out, valid = _integrate_gauss(profile, xs, ts, Y0, dt_sub, growth)
    B_tt, B_xtt = _second_t_derivatives(profile, xs, ts, out)
    return MetricGrid(xs, ts, out[:, 0], out[:, 1], out[:, 2], out[:, 3], out[:, 4],
                      B_tt, B_xtt, out[:, 5], valid, periodic_x)


# --------------------------------------------------------------------------
# polar chart


@dataclass
class PolarMetricGrid:
    """G(theta, rho) of the polar metric G^2 dtheta^2 + drho^2."""

    grid: MetricGrid
    b0: float
    profile: CurvatureProfile | None = None

    @property
    def thetas(self):
        return self.grid.xs

    @property
    def rhos(self):
        return self.grid.ts

    @property
    def G(self):
        return self.grid.B

    @property
    def G_rho(self):
        return self.grid.B_t

    def sample_points(self, theta, rho):
        """(G, G_rho) at scattered points; theta is treated as 2*pi periodic."""
        if len(self.thetas) == 1:
            return self.grid.sample_points(np.zeros_like(np.asarray(rho, float)), rho)
        return self.grid.sample_points(theta, rho, periodic_period=2 * math.pi)


def radial_moment(profile: CurvatureProfile, thetas=None) -> float:
    """sup_theta int_0^inf rho k^2 d rho."""
    if profile.is_flat:
        return 0.0
    if profile.kind in ("constant", "efimov"):
        return math.inf
    if profile.kind == "custom":
        thetas = np.linspace(0, 2 * math.pi, 33) if thetas is None else thetas
        return max(integrate.quad(lambda r: r * float(profile.k(th, r)) ** 2, 0, math.inf,
                                  limit=400)[0] for th in thetas)
    val = integrate.quad(lambda r: r * float(profile.base(r)[0]) ** 2, 0, math.inf,
                         limit=400)[0]
    return profile.modulation.sup ** 2 * val


def solve_polar_gauss(profile: CurvatureProfile, thetas, rhos, dt_sub: float = 0.01,
                      growth: float = 0.0) -> PolarMetricGrid:
    """Integrate G_rhorho = k^2 G with G(theta,0)=0, G_rho(theta,0)=1."""
    thetas = np.asarray(thetas, dtype=float)
    rhos = np.asarray(rhos, dtype=float)
    if rhos[0] != 0.0:
        raise ValueError("rhos must start at 0")
    Y0 = np.zeros((6, len(thetas)))
    Y0[1] = 1.0
    out, valid = _integrate_gauss(profile, thetas, rhos, Y0, dt_sub, growth)
    G_tt, G_xtt = _second_t_derivatives(profile, thetas, rhos, out)
    grid = MetricGrid(thetas, rhos, out[:, 0], out[:, 1], out[:, 2], out[:, 3], out[:, 4],
                      G_tt, G_xtt, out[:, 5], valid, periodic_x=True)
    b0 = math.exp(radial_moment(profile, thetas))
    return PolarMetricGrid(grid, b0, profile)


# --------------------------------------------------------------------------
# hypotheses


@dataclass
class HypothesisReport:
    t0: float
    delta: float
    integral_sup: float
    integral_method: str
    kt_limit: float
    kt_trend_ok: bool
    monotone_onset: float
    monotone_ok: bool
    t0_suggested: float
    h2_bounds: tuple
    h3_infima: tuple
    clauses: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _default_xs(profile):
    x0, x1 = profile.domain[:2]
    lo, hi = max(x0, -10.0), min(x1, 10.0)
    return np.linspace(lo, hi, 201)


def tail_integral(profile: CurvatureProfile, t0: float, xs=None, t_max: float = 1e4):
    """sup_x int_{t0}^inf k dt and the method used.

    Built-ins use the closed-form antiderivative; custom profiles integrate to
    t_max and add a remainder from a power law k ~ C t^-p fitted on the last
    decade, k(t_max) t_max / (p - 1), which is infinite when p <= 1.
    """
    if profile.kind != "custom":
        return profile.modulation.sup * profile.base_tail_integral(t0), "closed_form"
    xs = _default_xs(profile) if xs is None else np.asarray(xs, dtype=float)
    best = 0.0
    for x in xs:
        body = integrate.quad(lambda t: float(profile.k(x, t)), t0, t_max, limit=500)[0]
        ka, kb = float(profile.k(x, t_max / 10)), float(profile.k(x, t_max))
        p = math.log(ka / kb) / math.log(10.0)
        rem = kb * t_max / (p - 1) if p > 1 else math.inf
        best = max(best, body + rem)
    return best, "quadrature+remainder"


def check_hypotheses(profile: CurvatureProfile, t0: float, delta: float, xs=None,
                     t_max: float = 1e4, kt_tol: float = 0.05, slack: float = 1e-12,
                     n_samples: int = 4001, h2_cap: float = 1e6) -> HypothesisReport:
    """Numerical verdicts for the three curvature hypotheses.

    H1: tail integral finite, k t <= kt_tol at t_max and nonincreasing over
    the last decade, and d/dt ln(k t^{1+delta}) >= -slack beyond an onset
    that lies within the sampled range (onset <= t_max/10).
    H2: bounds on x-log-derivatives of k.
    H3: positive infima of int k^2 over each half line (the negative half is
    the reflection t -> -t of the profile).
    """
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    xs = _default_xs(profile) if xs is None else np.asarray(xs, dtype=float)
    diag = []

    integral_sup, method = tail_integral(profile, t0, xs, t_max)
    integral_ok = math.isfinite(integral_sup)
    if not integral_ok:
        diag.append("H1: tail integral of k diverges")

    t_dec = np.geomspace(t_max / 10, t_max, 41)
    X, T = np.meshgrid(xs, t_dec, indexing="ij")
    kt = (profile.k(X, T) * T).max(axis=0)
    kt_limit = float(kt[-1])
    kt_trend_ok = bool(np.all(np.diff(kt) <= slack))
    kt_ok = kt_limit <= kt_tol and kt_trend_ok
    if not kt_ok:
        diag.append(f"H1: k*t = {kt_limit:.4g} at t={t_max:g} does not tend to 0 "
                    f"(tolerance {kt_tol})")

    ts = np.geomspace(min(t0, 1.0), t_max, n_samples)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    c = profile.evaluate(X, T, check=False)
    g = (c.k_t / c.k + (1 + delta) / T).min(axis=0)
    fails = np.nonzero(g < -slack)[0]
    if len(fails) == 0:
        onset = float(ts[0])
    elif fails[-1] == len(ts) - 1:
        onset = math.inf
    else:
        onset = float(ts[fails[-1] + 1])
    monotone_ok = onset <= t_max / 10
    if not monotone_ok:
        diag.append(f"H1: d/dt ln(k t^(1+{delta})) >= 0 not established before t={t_max / 10:g}")
    t0_suggested = float(math.ceil(max(t0, onset))) if math.isfinite(onset) else math.inf

    lk_x = c.k_x / c.k
    h2 = (float(np.abs(lk_x).max()),
          float(np.abs(c.k_xx / c.k - lk_x ** 2).max()),
          float(np.abs(T * (c.k_xt / c.k - c.k_x * c.k_t / c.k ** 2)).max()))
    h2_ok = all(math.isfinite(v) and v < h2_cap for v in h2)
    if not h2_ok:
        diag.append("H2: x-log-derivative bounds of k not finite")

    h3 = _square_infimum(profile, xs)
    h3_ok = h3 > 0
    if not h3_ok:
        diag.append("H3: int k^2 vanishes")

    clauses = {"integral": integral_ok, "kt": kt_ok, "monotone": monotone_ok}
    verdicts = {"H1": all(clauses.values()), "H2": h2_ok, "H3": h3_ok}
    return HypothesisReport(t0, delta, integral_sup, method, kt_limit, kt_trend_ok, onset,
                            monotone_ok, t0_suggested, h2, (h3, h3), clauses, verdicts, diag)


def _square_infimum(profile, xs):
    """inf_x int_0^inf k^2 dt (equal for the reflected half line)."""
    if profile.kind == "constant":
        return math.inf if profile.params.get("k0", 1.0) > 0 else 0.0
    if profile.kind == "custom":
        return min(integrate.quad(lambda t: float(profile.k(x, t)) ** 2, 0, math.inf,
                                  limit=400)[0] for x in xs[:: max(1, len(xs) // 20)])
    val = integrate.quad(lambda t: float(profile.base(t)[0]) ** 2, 0, math.inf, limit=400)[0]
    return profile.modulation.inf ** 2 * val


def square_integral(profile, weight_t=False):
    """int_0^inf kb^2 (times t if ``weight_t``) for a separable profile."""
    if weight_t:
        fn = lambda t: t * float(profile.base(t)[0]) ** 2  # noqa: E731
    else:
        fn = lambda t: float(profile.base(t)[0]) ** 2  # noqa: E731
    return integrate.quad(fn, 0, math.inf, limit=400)[0]


# --------------------------------------------------------------------------
# asymptotics


@dataclass
class AsymptoticsReport:
    sample_ts: np.ndarray
    e: np.ndarray
    decreasing: bool
    final_ok: bool
    diag_sup: dict
    C1: float
    C2: float
    t_tail: float

    @property
    def asymptotics_ok(self) -> bool:
        return self.decreasing and self.final_ok


def verify_metric_asymptotics(m: MetricGrid, profile: CurvatureProfile, sample_ts=None,
                              kt_tail: float = 0.1, e_tol: float = 0.1) -> AsymptoticsReport:
    """Sample e(t) = sup_x |t B_t/B - 1| and linear-growth constants of B."""
    t_hi = m.t_valid_max
    if sample_ts is None:
        sample_ts = [10.0 ** j for j in range(1, 9) if 10.0 ** j <= t_hi]
    sample_ts = np.asarray(sample_ts, dtype=float)
    e = np.array([np.max(np.abs(t * s.B_t / s.B - 1)) for t, s in
                  ((t, m.sample(t)) for t in sample_ts)])
    decreasing = bool(len(e) >= 2 and np.all(np.diff(e) < 0))
    final_ok = bool(len(e) > 0 and e[-1] <= e_tol)

    n = int(m.valid_count.min())
    ts = m.ts[:n]
    X, T = np.meshgrid(m.xs, ts, indexing="ij")
    kt = (profile.k(X, T) * T).max(axis=0)
    small = np.nonzero(kt <= kt_tail)[0]
    # tail starts where k t stays below the threshold for good
    if len(small) and small[-1] == n - 1:
        breaks = np.nonzero(np.diff(small) > 1)[0]
        start = small[breaks[-1] + 1] if len(breaks) else small[0]
        t_tail = float(ts[start])
    else:
        start, t_tail = n, math.inf
    d = m.log_diag
    sl = slice(start, n)
    diag_sup = {key: float(np.max(np.abs(d[key][sl]))) if start < n else math.nan
                for key in ("dx_lnB", "dxx_lnB", "BdxdtlnB")}
    if start < n:
        ratio = m.B[sl] / ts[sl, None]
        C1, C2 = float(ratio.min()), float(ratio.max())
    else:
        C1 = C2 = math.nan
    return AsymptoticsReport(sample_ts, e, decreasing, final_ok, diag_sup, C1, C2, t_tail)


def tail_time_grid(t_end: float, dt: float = 0.05, growth: float = 0.01) -> np.ndarray:
    """Nodes spaced dt near 0 and growing geometrically (ratio 1+growth) later."""
    out = [0.0]
    t = 0.0
    while t < t_end:
        t = min(t_end, t + max(dt, growth * t))
        out.append(t)
    return np.array(out)
