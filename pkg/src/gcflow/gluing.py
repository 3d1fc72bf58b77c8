"""Gluing the geodesic chart (x, t) to the geodesic polar chart (theta, rho).

Each geodesic normal to the base curve is followed in the polar chart:

    rho' = tanh Phi,   theta' = xi / (G cosh Phi),   Phi' = G_rho / G,

starting from rho = |x|, theta in {0, pi}, Phi = 0.  The sign xi = -sign(x)
makes the Jacobian entry rho_x = -xi B / cosh Phi carry the sign of x, so
theta decreases from 0 for x > 0 (clockwise orientation).

The surface is the polar profile kbar(theta, rho); its geodesic chart has
k(x, t) = kbar(theta(x, t), rho(x, t)), and B is integrated along each
normal together with the transform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certify import ConfigurationError, coefficient_sup_field
from .geometry import PolarMetricGrid
from .hyperbolic import GridCoefficients, InvariantField
from .profiles import CurvatureProfile

TRANSFORM_HEADER = "x,t,rho,theta,Phi,xi"
TRACE_HEADER = "x,rho,theta,rbar,sbar,dtheta_rbar,dtheta_sbar"
TWO_PI = 2.0 * math.pi


@dataclass
class TransformField:
    """Transform samples indexed [t_j, x_i]; theta is unwrapped per column."""

    xs: np.ndarray
    ts: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    Phi: np.ndarray
    xi: np.ndarray
    B: np.ndarray
    B_t: np.ndarray
    G: np.ndarray
    G_rho: np.ndarray
    kbar: np.ndarray | None = None
    kbar_rho: np.ndarray | None = None
    kbar_theta: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def theta_mod(self):
        return np.mod(self.theta, TWO_PI)

    @property
    def jacobian(self) -> dict:
        ch = np.cosh(self.Phi)
        return {
            "rho_t": np.tanh(self.Phi),
            "theta_t": self.xi / (self.G * ch),
            "rho_x": -self.xi * self.B / ch,
            "theta_x": self.B / self.G * np.tanh(self.Phi),
        }

    def sandwich(self, tol: float = 1e-9) -> dict:
        """Fractions of nodes satisfying each inequality of the sandwich."""
        T, X = np.meshgrid(self.ts, self.xs, indexing="ij")
        ax = np.abs(X)
        rho = self.rho
        slack = tol * np.maximum(1.0, T + ax)
        checks = {
            "t_le_rho": T <= rho + slack,
            "half_x_le_rho": 0.5 * ax <= rho + slack,
            "rho_le_t_plus_x": rho <= T + ax + slack,
            "t_plus_x_le_3rho": T + ax <= 3 * rho + slack,
        }
        return {name: float(np.mean(c)) for name, c in checks.items()}

    def rows(self):
        T, X = np.meshgrid(self.ts, self.xs, indexing="ij")
        return [X.ravel(), T.ravel(), self.rho.ravel(), self.theta_mod.ravel(),
                self.Phi.ravel(), self.xi.ravel()]


def _march(polar: PolarMetricGrid, profile: CurvatureProfile | None, xs, t_ends, taus,
           step_frac: float, metric=None):
    """RK4 in the normalized time tau = t / t_end per column.

    Returns arrays [len(taus), len(xs)] for rho, theta, Phi, B, B_t.
    """
    xs = np.asarray(xs, dtype=float)
    t_ends = np.broadcast_to(np.asarray(t_ends, dtype=float), xs.shape)
    if np.any(xs == 0):
        raise ValueError("the axis column x = 0 is handled by the polar chart")
    xi = -np.sign(xs)
    ax = np.abs(xs)
    rho_max = float(polar.rhos[-1])
    if np.any(t_ends + ax > rho_max):
        raise ConfigurationError("polar grid does not cover the transform region")

    def rhs(Y, t):
        rho, th, Phi, B, Bt = Y
        G, Gr = polar.sample_points(th, rho)
        ch = np.cosh(Phi)
        out = np.array([np.tanh(Phi), xi / (G * ch), Gr / G, Bt, np.zeros_like(B)])
        if metric is None:
            kb = profile.k(th, rho) if profile is not None else 0.0
            out[4] = kb * kb * B
        return out

    Y = np.array([ax, np.where(xs > 0, 0.0, math.pi), np.zeros_like(xs), np.ones_like(xs),
                  np.zeros_like(xs)])
    out = np.empty((len(taus), 5, len(xs)))
    out[0] = Y
    x_min = float(ax.min())
    T_max = float(t_ends.max())
    tau = float(taus[0])
    for n in range(1, len(taus)):
        target = float(taus[n])
        while tau < target - 1e-15:
            h = step_frac * (tau + x_min / T_max)
            h = min(h, target - tau)
            scale = t_ends[None, :]
            k1 = scale * rhs(Y, tau)
            k2 = scale * rhs(Y + h / 2 * k1, tau + h / 2)
            k3 = scale * rhs(Y + h / 2 * k2, tau + h / 2)
            k4 = scale * rhs(Y + h * k3, tau + h)
            Y = Y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            tau += h
        out[n] = Y
    return out, xi


def coordinate_transform(polar: PolarMetricGrid, xs, ts, profile: CurvatureProfile | None = None,
                         metric=None, step_frac: float = 0.01) -> TransformField:
    """Transform on the full (x, t) grid.

    ``profile`` is the polar curvature kbar(theta, rho); B along each normal
    is co-integrated from it unless a geodesic ``metric`` grid is supplied.
    With neither, the flat metric B = 1 is used.
    """
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if ts[0] != 0:
        raise ValueError("ts must start at 0")
    T = float(ts[-1])
    taus = ts / T
    out, xi = _march(polar, profile, xs, T, taus, step_frac, metric)
    rho, theta, Phi = out[:, 0], out[:, 1], out[:, 2]
    if metric is not None:
        B, Bt = metric.B, metric.B_t
    else:
        B, Bt = out[:, 3], out[:, 4]
    G, Gr = polar.sample_points(theta.ravel(), rho.ravel())
    G, Gr = G.reshape(rho.shape), Gr.reshape(rho.shape)
    XI = np.broadcast_to(xi, rho.shape).copy()
    tf = TransformField(xs, ts, rho, theta, Phi, XI, B, Bt, G, Gr)
    if profile is not None:
        c = profile.evaluate(theta, rho, check=False)
        tf.kbar, tf.kbar_rho, tf.kbar_theta = c.k, c.k_t, c.k_x
    return tf


def boundary_transform(polar: PolarMetricGrid, profile, x_samples, t_ends,
                       step_frac: float = 0.01) -> TransformField:
    """Transform evaluated only at the end point (x, t_end(x)) of each column."""
    out, xi = _march(polar, profile, x_samples, t_ends, np.array([0.0, 1.0]), step_frac)
    end = out[-1]
    rho, theta, Phi, B, Bt = (a[None, :] for a in end)
    G, Gr = polar.sample_points(theta.ravel(), rho.ravel())
    tf = TransformField(np.asarray(x_samples, float), np.asarray(t_ends, float), rho, theta, Phi,
                        xi[None, :], B, Bt, G[None, :], Gr[None, :])
    if profile is not None:
        c = profile.evaluate(theta, rho, check=False)
        tf.kbar, tf.kbar_rho, tf.kbar_theta = c.k, c.k_t, c.k_x
    return tf


def jacobian_consistency(tf: TransformField) -> dict:
    """Finite-difference rho_x against -xi B / cosh Phi (interior columns)."""
    drho = np.gradient(tf.rho, tf.xs, axis=1)
    formula = tf.jacobian["rho_x"]
    sl = (slice(1, None), slice(1, -1))
    a, b = drho[sl], formula[sl]
    # skip the two columns next to the axis, where the stencil straddles x = 0
    near = np.abs(tf.xs[1:-1]) < 1.5 * np.min(np.diff(tf.xs))
    a, b = a[:, ~near], b[:, ~near]
    sign_ok = float(np.mean(np.sign(a) == np.sign(b)))
    return {"sign_agreement": sign_ok, "max_abs_diff": float(np.max(np.abs(a - b)))}


def pulled_back_coefficients(tf: TransformField) -> GridCoefficients:
    """Coefficient pack of the geodesic chart induced by the polar surface."""
    if tf.kbar is None:
        raise ValueError("transform carries no curvature")
    J = tf.jacobian
    k = tf.kbar
    k_t = tf.kbar_rho * J["rho_t"] + tf.kbar_theta * J["theta_t"]
    k_x = tf.kbar_rho * J["rho_x"] + tf.kbar_theta * J["theta_x"]

    def dx(a):
        return np.gradient(a, tf.xs, axis=1)
    B, Bt = tf.B, tf.B_t
    fields = {"k": k, "k_t": k_t, "k_x": k_x, "k_xx": dx(k_x), "k_xt": dx(k_t),
              "B": B, "B_t": Bt, "B_x": dx(B), "B_xt": dx(Bt), "B_xx": dx(dx(B))}
    return GridCoefficients(tf.xs, tf.ts, fields)


# --------------------------------------------------------------------------
# domains


@dataclass
class OmegaDomain:
    R: float
    xs: np.ndarray
    boundary: np.ndarray
    side: str

    def contains(self, x, t):
        t0 = self.R * (1 + np.asarray(x) ** 2)
        return t <= t0 if self.side == "omega1" else t > t0


def boundary_time(R, x):
    return R * (1.0 + np.asarray(x, dtype=float) ** 2)


def boundary_slope(x):
    """|t0'(x)| / (t0(x) + R), independent of R."""
    x = np.asarray(x, dtype=float)
    return np.abs(2 * x) / (2 + x * x)


def build_domains(R: float, xs) -> tuple[OmegaDomain, OmegaDomain]:
    if not R > 0:
        raise ValueError("R must be positive")
    xs = np.asarray(xs, dtype=float)
    t0 = boundary_time(R, xs)
    return OmegaDomain(R, xs, t0, "omega1"), OmegaDomain(R, xs, t0, "omega2")


def spacelike_report(trace: "PolarTrace") -> dict:
    """Boundary slopes against the characteristic slopes of the polar system.

    The x < 0 branch is theta1 (lower angle), the x > 0 branch theta2; the
    conditions are d theta1/d rho < k sbar and d theta2/d rho > k rbar.
    """
    out = {}
    for name, sel, sign in (("theta1", trace.x < 0, -1), ("theta2", trace.x > 0, 1)):
        idx = np.nonzero(sel)[0]
        order = idx[np.argsort(trace.rho[idx])]
        rho, th = trace.rho[order], trace.theta[order]
        slope = np.gradient(th, rho)
        if sign < 0:
            gap = trace.k[order] * trace.sbar[order] - slope
        else:
            gap = slope - trace.k[order] * trace.rbar[order]
        out[name] = {"passed": bool(np.all(gap > 0)), "min_gap": float(gap.min())}
    out["passed"] = out["theta1"]["passed"] and out["theta2"]["passed"]
    return out


# --------------------------------------------------------------------------
# eta construction


def smooth_ramp(z, a: float = 0.25, b: float = 1.0):
    """C-infinity ramp: 0 for z <= a, 1 for z >= b."""
    u = np.clip((np.asarray(z, dtype=float) - a) / (b - a), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        f1 = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1 - u, 1.0)), 0.0)
    return f0 / (f0 + f1)


@dataclass
class EtaConstruction:
    zetas: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    psi_interval: tuple
    sigma: float
    xs: np.ndarray
    log_eta: np.ndarray
    truncation_log_bound: float
    notes: list = field(default_factory=list)

    @property
    def eta(self):
        return np.exp(self.log_eta)

    def initial_data(self):
        e = self.sigma * self.eta
        return e, -e


def coefficient_envelope(coeffs: GridCoefficients, R: float, zetas, safety: float = 2.0):
    """h1(zeta) = safety * (1 + sup over Omega1 with |x| <= zeta), nondecreasing."""
    xs, ts = coeffs.xs, coeffs.ts
    t0 = boundary_time(R, xs)
    col_sup = np.zeros(len(xs))
    seen = np.zeros(len(xs), dtype=bool)
    for j, t in enumerate(ts):
        inside = t <= t0
        if not inside.any():
            continue
        v = coefficient_sup_field(coeffs.at(t))
        col_sup[inside] = np.maximum(col_sup[inside], v[inside])
        seen |= inside
    h1 = np.empty(len(zetas))
    for n, z in enumerate(zetas):
        sel = (np.abs(xs) <= z) & seen
        if not sel.any():
            sel = (np.abs(xs) <= max(z, np.min(np.abs(xs)))) & seen
        if not sel.any():
            raise ConfigurationError("Omega1 grid too coarse to sample the coefficient envelope")
        h1[n] = safety * (1.0 + col_sup[sel].max())
    return np.maximum.accumulate(h1)


def construct_initial_eta(sigma: float, R: float, coeffs: GridCoefficients, xs,
                          zeta_max_offset: float = 40.0, n_quad: int = 8001) -> EtaConstruction:
    """eta(x) for the Omega1 initial data r = sigma eta, s = -sigma eta.

    Evaluated in log space: with realistic R the exponent is of order
    -30 R h1 and eta underflows to exactly zero in double precision.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    xs = np.asarray(xs, dtype=float)
    x_hi = float(np.max(np.abs(xs)))
    notes = []
    grid_x = float(np.max(np.abs(coeffs.xs)))
    zetas = np.linspace(0.0, x_hi + zeta_max_offset + 1.0, n_quad)
    h1_nodes = np.linspace(0.0, grid_x, 201)
    h1_vals = coefficient_envelope(coeffs, R, h1_nodes)
    if zetas[-1] > grid_x:
        notes.append(f"h1 extended as a constant beyond |x| = {grid_x:g}")

    def h1(z):
        return np.interp(z, h1_nodes, h1_vals)

    def h2(z):
        # running sup of the boundary slope: it peaks at sqrt(2)
        slope = np.where(z < math.sqrt(2), boundary_slope(z), boundary_slope(math.sqrt(2)))
        return 1.0 + h1(z) + slope

    zp = zetas + 1.0
    lever = boundary_time(R, zp) + R
    with np.errstate(divide="ignore"):
        log_int = (np.log(smooth_ramp(zetas)) - 30.0 * lever * h1(zp) - zetas ** 2
                   - np.log(lever * h2(zp)))
    dz = zetas[1] - zetas[0]
    # log of the trapezoid tail sums, from the right
    rev = log_int[::-1]
    logw = rev + math.log(dz)
    cum = np.logaddexp.accumulate(logw)[::-1]
    log_eta_nodes = cum - math.log(8 * math.pi)
    log_eta = np.interp(np.abs(xs), zetas, log_eta_nodes)
    trunc = float(log_int[-1] - math.log(2 * zetas[-1]) - math.log(8 * math.pi))
    return EtaConstruction(zetas, h1(zetas), h2(zetas), (0.25, 1.0), sigma, xs, log_eta, trunc,
                           notes)


def bisect_sigma(passes, start: float = 1.0, iterations: int = 12) -> float:
    """Largest sigma found (down from ``start``) for which ``passes(sigma)`` holds."""
    if passes(start):
        return start
    lo, hi = 0.0, start
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------
# pushforward and traces


@dataclass
class PolarTrace:
    x: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    k: np.ndarray
    rbar: np.ndarray
    sbar: np.ndarray
    gap_identity: np.ndarray
    excluded: np.ndarray

    def dtheta(self):
        order = np.argsort(self.theta)
        out = []
        for a in (self.rbar, self.sbar):
            d = np.empty_like(a)
            d[order] = np.gradient(a[order], self.theta[order])
            out.append(d)
        return out

    def rows(self):
        dr, ds = self.dtheta()
        return [self.x, self.rho, self.theta, self.rbar, self.sbar, dr, ds]


def pushforward_invariants(r, s, J: dict, k_geo, k_polar, B, G, x=None, rho=None, theta=None,
                           tol: float = 1e-14) -> PolarTrace:
    """rbar, sbar from the geodesic-chart invariants and the Jacobian.

    k_polar rbar = (theta_t + k r theta_x) / (rho_t + k r rho_x), likewise for
    sbar; the separation is also evaluated through the closed identity
    B (r - s) / (G D_r D_s).
    """
    r, s = np.asarray(r, float), np.asarray(s, float)
    Dr = J["rho_t"] + k_geo * r * J["rho_x"]
    Ds = J["rho_t"] + k_geo * s * J["rho_x"]
    excluded = (np.abs(Dr) < tol) | (np.abs(Ds) < tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        rbar = (J["theta_t"] + k_geo * r * J["theta_x"]) / (k_polar * Dr)
        sbar = (J["theta_t"] + k_geo * s * J["theta_x"]) / (k_polar * Ds)
        gap = B * (r - s) / (G * Dr * Ds) * (k_geo / k_polar)
    rbar = np.where(excluded, np.nan, rbar)
    sbar = np.where(excluded, np.nan, sbar)
    n = rbar.shape
    z = np.zeros(n)
    return PolarTrace(z if x is None else np.asarray(x), z if rho is None else np.asarray(rho),
                      z if theta is None else np.asarray(theta), np.asarray(k_polar) + z,
                      rbar, sbar, gap, excluded)


def sample_field(field_: InvariantField, x, t):
    """Bilinear sample of (r, s) at scattered points."""
    xs, ts = field_.xs, field_.ts
    x, t = np.asarray(x, float), np.asarray(t, float)
    j = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
    wt = (t - ts[j]) / (ts[j + 1] - ts[j])
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
    wx = (x - xs[i]) / (xs[i + 1] - xs[i])
    out = []
    for a in (field_.r, field_.s):
        lo = (1 - wx) * a[j, i] + wx * a[j, i + 1]
        hi = (1 - wx) * a[j + 1, i] + wx * a[j + 1, i + 1]
        out.append((1 - wt) * lo + wt * hi)
    valid = field_.valid[j, i] & field_.valid[j, i + 1] & field_.valid[j + 1, i] & \
        field_.valid[j + 1, i + 1]
    return out[0], out[1], valid


def boundary_trace(polar: PolarMetricGrid, profile: CurvatureProfile, R: float, x_samples,
                   field_: InvariantField | None = None, step_frac: float = 0.01) -> PolarTrace:
    """Pushforward of the Omega1 solution along the sampled boundary of Omega2."""
    x_samples = np.asarray(x_samples, dtype=float)
    t_end = boundary_time(R, x_samples)
    tf = boundary_transform(polar, profile, x_samples, t_end, step_frac)
    if field_ is None:
        r = s = np.zeros_like(x_samples)
    else:
        r, s, valid = sample_field(field_, x_samples, t_end)
        if not valid.all():
            raise ConfigurationError("boundary of Omega2 leaves the valid Omega1 solution")
    J = {key: v[0] for key, v in tf.jacobian.items()}
    k = tf.kbar[0]
    return pushforward_invariants(r, s, J, k, k, tf.B[0], tf.G[0], x_samples, tf.rho[0],
                                  np.mod(tf.theta[0], TWO_PI))


def boundary_trace_check(trace: PolarTrace, epsilon: float, mu: float) -> dict:
    """Trace bounds on the boundary with relative margins."""
    dr, ds = trace.dtheta()
    mag = float(np.nanmax(np.maximum(np.abs(trace.rbar), np.abs(trace.sbar))))
    der = float(np.nanmax(np.maximum(np.abs(dr), np.abs(ds))))
    sep = float(np.nanmin(trace.rbar - trace.sbar))
    return {
        "max_abs": mag, "max_abs_dtheta": der, "min_separation": sep,
        "magnitude_ok": mag <= epsilon, "derivative_ok": der <= mu,
        "separation_ok": sep >= 0.5 * epsilon,
        "margin_magnitude": 1.0 - mag / epsilon, "margin_derivative": 1.0 - der / mu,
        "identity_error": float(np.nanmax(np.abs((trace.rbar - trace.sbar) - trace.gap_identity))),
        "excluded": int(trace.excluded.sum()),
    }


# --------------------------------------------------------------------------
# pipeline


@dataclass
class GluingResult:
    R: float
    epsilon: float
    mu: float
    sigma0: float
    eta: EtaConstruction
    transform: TransformField
    trace: PolarTrace
    check: dict
    refined_check: dict
    spacelike: dict
    sandwich: dict
    jacobian: dict
    omega1_solution: str
    notes: list = field(default_factory=list)

    @property
    def refinement_stable(self) -> bool:
        keys = ("margin_magnitude", "margin_derivative")
        return all(abs(self.check[k] - self.refined_check[k]) <= 0.2 * abs(self.check[k])
                   for k in keys)

    @property
    def passed(self) -> bool:
        return (self.check["magnitude_ok"] and self.check["derivative_ok"]
                and self.refined_check["magnitude_ok"] and self.refined_check["derivative_ok"]
                and self.spacelike["passed"] and self.refinement_stable)

    def summary(self) -> dict:
        return {
            "R": self.R, "epsilon": self.epsilon, "mu": self.mu, "sigma0": self.sigma0,
            "log_eta_max": float(np.max(self.eta.log_eta)),
            "check": self.check, "refined_check": self.refined_check,
            "spacelike": self.spacelike, "sandwich": self.sandwich, "jacobian": self.jacobian,
            "refinement_stable": self.refinement_stable, "passed": self.passed,
            "omega1_solution": self.omega1_solution, "notes": self.notes,
        }


def run_gluing(profile: CurvatureProfile, R: float, epsilon: float, mu: float,
               x_trace: float = 4.0, n_trace: int = 160, x_grid: float = 6.0, dx: float = 0.05,
               growth: float = 0.05, step_frac: float = 0.01, polar_dt: float = 0.01,
               pde_dt_rel: float = 0.1) -> GluingResult:
    """Polar metric, transform, eta, Omega1 solve and the traces on the boundary of Omega2."""
    from .geometry import solve_polar_gauss, tail_time_grid
    from .hyperbolic import solve_cauchy

    notes = []
    T = float(boundary_time(R, max(x_trace, x_grid)))
    rhos = tail_time_grid(T + x_grid + 1.0, 0.05, 0.01)
    thetas = [0.0] if profile.x_independent else np.linspace(0, TWO_PI, 129)[:-1]
    polar = solve_polar_gauss(profile, thetas, rhos, dt_sub=polar_dt, growth=0.002)

    n = int(round(2 * x_grid / dx))
    xs = (np.arange(n) + 0.5) * dx - x_grid
    ts = tail_time_grid(T, 0.05, growth)
    tf = coordinate_transform(polar, xs, ts, profile, step_frac=step_frac)
    coeffs = pulled_back_coefficients(tf)

    eta = construct_initial_eta(1.0, R, coeffs, xs)
    notes += eta.notes
    underflow = not np.any(eta.eta > 0)

    def solve(sigma):
        if underflow:
            return None
        r0 = sigma * eta.eta
        return solve_cauchy(r0, -r0, xs, coeffs, (0.0, float(ts[-1])), dt_rel=pde_dt_rel,
                            snapshot_times=ts, periodic=False)

    def trace_for(field_, count):
        xb = np.linspace(-x_trace, x_trace, count + 1)
        xb = 0.5 * (xb[1:] + xb[:-1])
        return boundary_trace(polar, profile, R, xb, field_, step_frac)

    def passes(sigma):
        chk = boundary_trace_check(trace_for(solve(sigma), n_trace), epsilon, mu)
        return chk["magnitude_ok"] and chk["derivative_ok"]

    if underflow:
        notes.append("sigma eta underflows; the Omega1 solution is identically zero")
        sigma0 = 1.0
        mode = "exact_zero"
    else:
        sigma0 = bisect_sigma(passes)
        mode = "pde"
    eta.sigma = sigma0
    sol = solve(sigma0)
    trace = trace_for(sol, n_trace)
    refined = trace_for(sol, 2 * n_trace)
    check = boundary_trace_check(trace, epsilon, mu)
    if not check["separation_ok"]:
        notes.append("rbar - sbar is below epsilon/2 on the boundary (reported, not asserted)")
    return GluingResult(R, epsilon, mu, sigma0, eta, tf, trace, check,
                        boundary_trace_check(refined, epsilon, mu), spacelike_report(trace),
                        tf.sandwich(), jacobian_consistency(tf), mode, notes)
