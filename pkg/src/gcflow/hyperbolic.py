"""Upwind characteristic solver for the weighted Riemann-invariant system.

The unknowns r = w/k and s = z/k obey

    r_t + k s r_x = f(r, s, x, t),    s_t + k r s_x = g(r, s, x, t),

and the derivative combinations r~ = (r-s) r_x, s~ = (r-s) s_x obey a
linear system along the same characteristics.  Time stepping is the
explicit midpoint rule; spatial differences are one-sided in the upwind
direction of each advecting speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .geometry import MetricGrid
from .profiles import CurvatureProfile

VALID, DOMAIN, HYPERBOLICITY, OVERFLOW = 0, 1, 2, 3
CAUSES = {DOMAIN: "domain_of_dependence", HYPERBOLICITY: "hyperbolicity_loss",
          OVERFLOW: "state_overflow"}
SNAPSHOT_HEADER = "x,t,r,s,r_tilde,s_tilde,valid"


class CFLViolation(RuntimeError):
    def __init__(self, nu, suggested_dt):
        super().__init__(f"CFL number {nu:.3g} too large; retry with dt <= {suggested_dt:.3g}")
        self.nu = nu
        self.suggested_dt = suggested_dt


class Coefficients(NamedTuple):
    k: np.ndarray
    k_t: np.ndarray
    k_x: np.ndarray
    k_xx: np.ndarray
    k_xt: np.ndarray
    B: np.ndarray
    B_t: np.ndarray
    B_x: np.ndarray
    B_xt: np.ndarray
    B_xx: np.ndarray


class ChartCoefficients:
    """Analytic curvature plus a Gauss-equation metric grid on the same xs."""

    def __init__(self, profile: CurvatureProfile, metric: MetricGrid):
        self.profile = profile
        self.metric = metric
        self.xs = metric.xs

    def at(self, t: float) -> Coefficients:
        c = self.profile.evaluate(self.xs, np.full_like(self.xs, t), check=False)
        m = self.metric.sample(t)
        return Coefficients(c.k, c.k_t, c.k_x, c.k_xx, c.k_xt, m.B, m.B_t, m.B_x, m.B_xt, m.B_xx)


class GridCoefficients:
    """Coefficient fields tabulated on a (t, x) grid, linear in t."""

    def __init__(self, xs, ts, fields: dict):
        self.xs = np.asarray(xs, dtype=float)
        self.ts = np.asarray(ts, dtype=float)
        self.fields = {name: np.asarray(fields[name], dtype=float) for name in Coefficients._fields}

    def at(self, t: float) -> Coefficients:
        ts = self.ts
        j = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return Coefficients(*[(1 - w) * self.fields[n][j] + w * self.fields[n][j + 1]
                              for n in Coefficients._fields])


def derived_pack(c: Coefficients) -> np.ndarray:
    """Rows consumed by the step kernel (see ``_kernels_py``)."""
    bx = c.B_x / c.B
    bt = c.B_t / c.B
    c1 = bt + c.k_t / (2 * c.k)
    c2k = bx * c.k + 1.5 * c.k_x
    p = c.B * c.B_t * c.k ** 2
    c1x = c.B_xt / c.B - bt * bx + (c.k_xt * c.k - c.k_t * c.k_x) / (2 * c.k ** 2)
    c2kx = (c.B_xx / c.B - bx ** 2) * c.k + bx * c.k_x + 1.5 * c.k_xx
    px = (c.B_x * c.B_t + c.B * c.B_xt) * c.k ** 2 + 2 * c.B * c.B_t * c.k * c.k_x
    return np.array([c.k, c.k_x, c1, c2k, 0.5 * c.k_x, p, c1x, c2kx, 0.5 * c.k_xx, px])


def source_terms(r, s, c: Coefficients):
    """(f, g) of the weighted system."""
    c1 = c.B_t / c.B + c.k_t / (2 * c.k)
    c2 = c.B_x / c.B + 1.5 * c.k_x / c.k
    p = c.B * c.B_t * c.k ** 2
    lin = -c1 * (r + s) - c2 * c.k * r * s
    f = lin + 0.5 * c.k_x * r * r - p * r * r * s
    g = lin + 0.5 * c.k_x * s * s - p * r * s * s
    return f, g


def source_derivatives(r, s, c: Coefficients) -> dict:
    """Q, the partials f_r, f_s, g_r, g_s and the explicit x-derivatives of f, g."""
    D = derived_pack(c)
    _, _, c1, c2k, e, p, c1x, c2kx, ex, px = D
    rs = r * s
    linx = -c1x * (r + s) - c2kx * rs
    return {
        "Q": -p * rs + e * (r + s),
        "f_r": -c1 - c2k * s + 2 * e * r - 2 * p * rs,
        "f_s": -c1 - c2k * r - p * r * r,
        "g_r": -c1 - c2k * s - p * s * s,
        "g_s": -c1 - c2k * r + 2 * e * s - 2 * p * rs,
        "dxf": linx + ex * r * r - px * r * rs,
        "dxg": linx + ex * s * s - px * rs * s,
    }


# --------------------------------------------------------------------------
# state containers


@dataclass
class InvariantState:
    """One time level of the solver."""

    xs: np.ndarray
    t: float
    r: np.ndarray
    s: np.ndarray
    valid: np.ndarray
    cause: np.ndarray
    r_tilde: np.ndarray | None = None
    s_tilde: np.ndarray | None = None

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0])


@dataclass
class InvariantField:
    """Snapshots of (r, s, r~, s~) with validity, indexed [snapshot, x]."""

    xs: np.ndarray
    ts: np.ndarray
    r: np.ndarray
    s: np.ndarray
    r_tilde: np.ndarray
    s_tilde: np.ndarray
    valid: np.ndarray
    cause: np.ndarray
    periodic: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def recover_wz(self, coeffs):
        k = np.array([coeffs.at(t).k for t in self.ts])
        return k * self.r, k * self.s

    def rows(self):
        T, X = np.meshgrid(self.ts, self.xs, indexing="ij")
        return [X.ravel(), T.ravel(), self.r.ravel(), self.s.ravel(),
                self.r_tilde.ravel(), self.s_tilde.ravel(), self.valid.astype(int).ravel()]

    def snapshot(self, j) -> InvariantState:
        return InvariantState(self.xs, float(self.ts[j]), self.r[j], self.s[j], self.valid[j],
                              self.cause[j], self.r_tilde[j], self.s_tilde[j])


def erode(mask, reach, periodic):
    out = mask.copy()
    for shift in range(1, reach + 1):
        if periodic:
            out &= np.roll(mask, shift) & np.roll(mask, -shift)
        else:
            out[:shift] = False
            out[-shift:] = False
            out[shift:] &= mask[:-shift]
            out[:-shift] &= mask[shift:]
    return out


def _extra(extra_source, t, xs):
    if extra_source is None:
        return np.zeros((2, len(xs)))
    a, b = extra_source(t, xs)
    return np.array([np.broadcast_to(a, xs.shape), np.broadcast_to(b, xs.shape)], dtype=float)


def step_upwind(state: InvariantState, coeffs, dt: float, periodic: bool = True,
                cfl_max: float = 0.5, floor: float = 0.0, ceiling: float = 1e6,
                extra_source: Callable | None = None, reach: int = 2) -> InvariantState:
    """Advance one midpoint step and update the validity bookkeeping.

    Raises CFLViolation (with a suggested dt) when either stage's CFL number
    over valid cells exceeds ``cfl_max``.
    """
    xs, t, dx = state.xs, state.t, state.dx
    tilde = state.r_tilde is not None
    c0 = coeffs.at(t)
    c1 = coeffs.at(t + 0.5 * dt)
    v = state.valid
    speed = np.max(np.abs(c0.k * np.maximum(np.abs(state.r), np.abs(state.s)))[v], initial=0.0)
    nu = dt * speed / dx
    if nu > cfl_max:
        raise CFLViolation(nu, 0.9 * cfl_max * dx / speed)
    E0 = _extra(extra_source, t, xs)
    E1 = _extra(extra_source, t + 0.5 * dt, xs)
    with np.errstate(all="ignore"):
        r1, s1, rt1, st1 = kernels.pc_step(state.r, state.s, state.r_tilde, state.s_tilde,
                                           derived_pack(c0), derived_pack(c1), E0, E1,
                                           dt, dx, periodic, tilde)
        speed1 = np.max(np.abs(c1.k * np.maximum(np.abs(r1), np.abs(s1)))[v], initial=0.0)
    if not np.isfinite(speed1) or dt * speed1 / dx > 2 * cfl_max:
        # the corrector state overshot; its speed says little about a safe dt
        raise CFLViolation(dt * speed1 / dx, 0.5 * dt)

    cause = state.cause.copy()
    with np.errstate(all="ignore"):
        over = ~(np.isfinite(r1) & np.isfinite(s1)) | (np.abs(r1) + np.abs(s1) > ceiling)
        hyp = ~over & ~(r1 - s1 > floor)
    dom = ~erode(v, reach, periodic)
    new_valid = v & ~over & ~hyp & ~dom
    lost = v & ~new_valid
    cause[lost & dom] = DOMAIN
    cause[lost & hyp] = HYPERBOLICITY
    cause[lost & over] = OVERFLOW
    r1 = np.where(v, r1, state.r)
    s1 = np.where(v, s1, state.s)
    if tilde:
        rt1 = np.where(v, rt1, state.r_tilde)
        st1 = np.where(v, st1, state.s_tilde)
    return InvariantState(xs, t + dt, r1, s1, new_valid, cause, rt1, st1)


def fd_tilde(r, s, dx, valid, periodic):
    """r~, s~ from centered differences; NaN where the stencil leaves validity."""
    if periodic:
        dr = (np.roll(r, -1) - np.roll(r, 1)) / (2 * dx)
        ds = (np.roll(s, -1) - np.roll(s, 1)) / (2 * dx)
    else:
        dr = np.gradient(r, dx)
        ds = np.gradient(s, dx)
    ok = erode(valid, 1, periodic)
    gap = r - s
    return np.where(ok, gap * dr, np.nan), np.where(ok, gap * ds, np.nan)


def solve_cauchy(r0, s0, xs, coeffs, t_span, cfl_target: float = 0.4, dt_max: float = 0.05,
                 dt_rel: float | None = None, source_frac: float | None = None,
                 snapshot_times=None, periodic: bool = True, tilde: bool = False,
                 floor: float = 0.0, ceiling: float = 1e6, extra_source=None,
                 reach: int = 2, max_steps: int = 10_000_000) -> InvariantField:
    """Iterate ``step_upwind`` from t_span[0] to t_span[1].

    dt is the smallest of the CFL target, ``dt_max``, ``dt_rel*t`` and (if
    ``source_frac`` is set) ``source_frac*|state|/|source|``, clipped to hit
    snapshot times exactly.  The run stops early once no valid cell is left.
    """
    xs = np.asarray(xs, dtype=float)
    r0 = np.broadcast_to(np.asarray(r0, dtype=float), xs.shape).copy()
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), xs.shape).copy()
    t_a, t_b = map(float, t_span)
    if np.any(r0 < s0):
        raise ValueError("initial data must satisfy r0 >= s0")
    if snapshot_times is None:
        snapshot_times = [t_a, t_b]
    snaps = sorted(set(float(x) for x in snapshot_times if t_a <= x <= t_b) | {t_a})
    dx = float(xs[1] - xs[0])
    valid = np.ones(len(xs), dtype=bool)
    cause = np.zeros(len(xs), dtype=np.int8)
    if tilde:
        rt, st = fd_tilde(r0, s0, dx, valid, periodic)
        rt, st = np.nan_to_num(rt), np.nan_to_num(st)
    else:
        rt = st = None
    state = InvariantState(xs, t_a, r0, s0, valid, cause, rt, st)
    out = []
    dts, nus, events = [], [], []
    first_loss = {}

    def record(st_):
        if tilde:
            rtv, stv = st_.r_tilde, st_.s_tilde
        else:
            rtv, stv = fd_tilde(st_.r, st_.s, dx, st_.valid, periodic)
        out.append((st_.t, st_.r.copy(), st_.s.copy(), rtv.copy(), stv.copy(),
                    st_.valid.copy(), st_.cause.copy()))

    record(state)
    si = 1
    steps = 0
    while si < len(snaps) and state.valid.any() and steps < max_steps:
        target = snaps[si]
        c = coeffs.at(state.t)
        v = state.valid
        speed = np.max(np.abs(c.k * np.maximum(np.abs(state.r), np.abs(state.s)))[v], initial=0.0)
        dt = dt_max if dt_rel is None else max(dt_max, dt_rel * state.t)
        if speed > 0:
            dt = min(dt, cfl_target * dx / speed)
        if source_frac is not None:
            f, g = source_terms(state.r[v], state.s[v], Coefficients(*[a[v] for a in c]))
            mag = np.max(np.abs(np.concatenate([f, g])), initial=0.0)
            size = np.max(np.abs(np.concatenate([state.r[v], state.s[v]])), initial=0.0)
            if mag > 0 and size > 0:
                dt = min(dt, source_frac * size / mag)
        dt = min(dt, target - state.t)
        while True:
            try:
                new = step_upwind(state, coeffs, dt, periodic, floor=floor, ceiling=ceiling,
                                  extra_source=extra_source, reach=reach)
                break
            except CFLViolation as err:
                dt = min(err.suggested_dt, 0.5 * dt)
        lost = state.valid & ~new.valid
        if lost.any():
            for code in (DOMAIN, HYPERBOLICITY, OVERFLOW):
                n_lost = int(np.sum(lost & (new.cause == code)))
                if n_lost:
                    events.append((new.t, CAUSES[code], n_lost))
                    first_loss.setdefault(CAUSES[code], new.t)
        dts.append(dt)
        nus.append(dt * speed / dx)
        state = new
        steps += 1
        if abs(state.t - target) <= 1e-12 * max(1.0, abs(target)):
            state.t = target
            record(state)
            si += 1
    if si < len(snaps) and out[-1][0] != state.t:
        record(state)
    ts = np.array([o[0] for o in out])
    arr = [np.array([o[i] for o in out]) for i in range(1, 7)]
    meta = {"dt": np.array(dts), "cfl": np.array(nus), "events": events,
            "first_loss": first_loss, "steps": steps, "backend": kernels.BACKEND,
            "completed": bool(si >= len(snaps)), "tilde_integrated": tilde}
    return InvariantField(xs, ts, arr[0], arr[1], arr[2], arr[3], arr[4], arr[5],
                          periodic, meta)


def compute_tilde(field: InvariantField, mode: str = "finite_difference"):
    """(r~, s~) for every snapshot.

    ``finite_difference`` differentiates the stored r, s; ``integrated`` returns
    the fields advanced alongside the solve (requires ``tilde=True`` there).
    """
    if mode == "integrated":
        if not field.meta.get("tilde_integrated", True) or field.r_tilde is None:
            raise ValueError("field was not solved with integrated tilde mode")
        return field.r_tilde, field.s_tilde
    if mode != "finite_difference":
        raise ValueError(f"unknown mode {mode!r}")
    pairs = [fd_tilde(field.r[j], field.s[j], field.dx, field.valid[j], field.periodic)
             for j in range(len(field.ts))]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def fs_sign_field(field: InvariantField, coeffs, delta: float):
    """Booleans f_s <= 0 on cells where d/dt ln(k t^{1+delta}) >= 0."""
    out = []
    for j, t in enumerate(field.ts):
        c = coeffs.at(t)
        d = source_derivatives(field.r[j], field.s[j], c)
        mono = c.k_t / c.k + (1 + delta) / t >= 0 if t > 0 else np.zeros_like(c.k, bool)
        out.append(np.where(mono & field.valid[j], d["f_s"] <= 0, True))
    return np.array(out)


# --------------------------------------------------------------------------
# linear decomposition and characteristic triangles


def linear_coefficients(r, s, c: Coefficients) -> dict:
    """Coefficients of (f, g) written as a linear system in (r, s).

    f = a11 r + a12 s, g = a21 r + a22 s with the nonlinear terms absorbed
    into the diagonal, and eigen-speeds lambda1 = k s, lambda2 = k r.
    """
    c1 = c.B_t / c.B + c.k_t / (2 * c.k)
    c2k = (c.B_x / c.B) * c.k + 1.5 * c.k_x
    p = c.B * c.B_t * c.k ** 2
    return {
        "a11": -c1 - c2k * s + 0.5 * c.k_x * r - p * r * s,
        "a12": -c1 + 0 * r,
        "a21": -c1 + 0 * r,
        "a22": -c1 - c2k * r + 0.5 * c.k_x * s - p * r * s,
        "lambda1": c.k * s,
        "lambda2": c.k * r,
    }


def growth_constant(field: InvariantField, coeffs, region=None) -> float:
    """max of |a_ij|, |d_x lambda_i|, |d_x a_ij| over the sampled region."""
    best = 0.0
    for j, t in enumerate(field.ts):
        mask = erode(field.valid[j], 1, field.periodic)
        if region is not None:
            mask &= region[j]
        if not mask.any():
            continue
        lc = linear_coefficients(field.r[j], field.s[j], coeffs.at(t))
        for key, val in lc.items():
            val = np.broadcast_to(val, field.xs.shape)
            d = np.gradient(val, field.dx)
            cand = [np.abs(d[mask]).max()]
            if not key.startswith("lambda"):
                cand.append(np.abs(val[mask]).max())
            best = max(best, *cand)
    return float(best)


@dataclass
class CharTriangle:
    apex: tuple
    taus: np.ndarray
    left_curve: np.ndarray   # Gamma_2, driven by lambda2 = k r
    right_curve: np.ndarray  # Gamma_1, driven by lambda1 = k s
    base_interval: tuple
    H: float
    truncated: bool = False


def _bilinear(field_vals, xs, ts, x, t, periodic):
    j = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
    wt = (t - ts[j]) / (ts[j + 1] - ts[j])
    dx = xs[1] - xs[0]
    if periodic:
        L = dx * len(xs)
        u = ((x - xs[0]) % L) / dx
        i0 = int(math.floor(u)) % len(xs)
        i1 = (i0 + 1) % len(xs)
        wx = u - math.floor(u)
    else:
        i0 = int(np.clip(math.floor((x - xs[0]) / dx), 0, len(xs) - 2))
        i1 = i0 + 1
        wx = (x - xs[i0]) / dx
    a = (1 - wx) * field_vals[j, i0] + wx * field_vals[j, i1]
    b = (1 - wx) * field_vals[j + 1, i0] + wx * field_vals[j + 1, i1]
    return (1 - wt) * a + wt * b


def characteristic_triangle(apex, field: InvariantField, coeffs, t0: float,
                            n_steps: int = 200) -> CharTriangle:
    """Backward characteristics from the apex down to t0 and the H constant.

    Speeds are bilinear interpolants of k r and k s on the snapshot grid;
    H is the linear-decomposition maximum over snapshot cells lying between
    the two curves.
    """
    x_star, t_star = map(float, apex)
    if not t0 < t_star:
        raise ValueError("t0 must precede the apex time")
    ts, xs = field.ts, field.xs
    kk = np.array([coeffs.at(t).k for t in ts])
    lam1 = kk * field.s
    lam2 = kk * field.r
    taus = np.linspace(t_star, t0, n_steps + 1)
    h = taus[1] - taus[0]
    curves = []
    truncated = False
    lo, hi = xs[0], xs[-1]
    for lam in (lam2, lam1):
        X = np.empty_like(taus)
        X[0] = x_star

        def v(x, t):
            return _bilinear(lam, xs, ts, x, t, field.periodic)
        for n in range(n_steps):
            x, t = X[n], taus[n]
            k1 = v(x, t)
            k2 = v(x + h / 2 * k1, t + h / 2)
            k3 = v(x + h / 2 * k2, t + h / 2)
            k4 = v(x + h * k3, t + h)
            X[n + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not field.periodic and (X.min() < lo or X.max() > hi):
            truncated = True
        curves.append(X)
    left, right = curves
    region = np.zeros(field.r.shape, dtype=bool)
    for j, t in enumerate(ts):
        if t0 <= t <= t_star:
            xl = np.interp(t, taus[::-1], left[::-1])
            xr = np.interp(t, taus[::-1], right[::-1])
            region[j] = (xs >= xl - field.dx) & (xs <= xr + field.dx)
    H = growth_constant(field, coeffs, region)
    return CharTriangle((x_star, t_star), taus, left, right, (left[-1], right[-1]), H, truncated)
