"""Spatially homogeneous Riemann-invariant ODE, its closed form and toy models.

When the metric is B(t)^2 dx^2 + dt^2 and the data are constant in x, the
Gauss-Codazzi system reduces to a 2x2 ODE for the unweighted invariants
(w, z) with a cubic source.  Its explicit solution is the exact oracle for
the PDE solver further down the pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .profiles import CurvatureProfile

CEILING = 1e6
FLOOR = 1e-12
MODELS = ("riemann", "toy", "scalar")


class BlowupSignal(ArithmeticError):
    """The closed-form radicand is not positive: the special solution is gone."""


class StepRefinementRequired(RuntimeError):
    """Local step halving hit its depth limit; retry with a smaller dt."""

    def __init__(self, t, suggested_dt):
        super().__init__(f"step refinement exhausted at t={t:.6g}; try dt <= {suggested_dt:.3g}")
        self.t = t
        self.suggested_dt = suggested_dt


@dataclass
class OdeState:
    t: float
    w: float
    z: float

    @property
    def hyperbolic(self) -> bool:
        return self.w > self.z


@dataclass
class BlowupReport:
    blew_up: bool
    t_star: float | None = None
    mechanism: str | None = None  # denominator_root, hyperbolicity_loss, state_overflow

    def as_dict(self):
        return {"blew_up": self.blew_up, "t_star": self.t_star, "mechanism": self.mechanism}


@dataclass
class Trajectory:
    t: np.ndarray
    w: np.ndarray
    z: np.ndarray
    k: np.ndarray
    B: np.ndarray
    B_t: np.ndarray
    blowup: BlowupReport = field(default_factory=lambda: BlowupReport(False))

    def states(self):
        return [OdeState(*v) for v in zip(self.t, self.w, self.z)]

    def rows(self):
        return [self.t, self.w, self.z, self.w + self.z, self.w - self.z,
                self.k, self.B, self.B_t]


TRAJECTORY_HEADER = "t,w,z,w_plus_z,w_minus_z,k,B,B_t"


# --------------------------------------------------------------------------
# closed form


def radicand(w0, z0, B, Bp, k0):
    """Squared denominator of the explicit solution (consistent in k0)."""
    B2 = B * B
    B4 = B2 * B2
    return (4 * B4 * k0 ** 2 + k0 ** 2 * (w0 + z0) ** 2 * (B4 - B2)
            - (w0 - z0) ** 2 * B4 * Bp ** 2)


def closed_form_special_solution(w0, z0, B, Bp, k, k0):
    """Explicit (w, z) for x-independent data and metric.

    Raises BlowupSignal when the radicand is not strictly positive.
    """
    rad = radicand(w0, z0, B, Bp, k0)
    if np.any(rad <= 0):
        raise BlowupSignal("nonpositive radicand")
    root = np.sqrt(rad)
    a = k0 * (w0 + z0)
    b = B * B * k * (w0 - z0)
    return (a + b) / root, (a - b) / root


def product_law(w0, z0, B, Bp, k, k0):
    """X = w z in closed form."""
    num = (w0 + z0) ** 2 / (4 * B ** 4) - k ** 2 * (w0 - z0) ** 2 / (4 * k0 ** 2)
    den = 1 + 0.25 * (w0 + z0) ** 2 * (1 - 1 / B ** 2) - 0.25 * (w0 - z0) ** 2 * Bp ** 2 / k0 ** 2
    return num / den


def riemann_rhs(w, z, k, k_t, B, B_t, model="riemann"):
    """Right-hand side of the homogeneous system (plus toy quadratic terms)."""
    a = B_t / B - k_t / (2 * k)
    b = B_t / B + k_t / (2 * k)
    c = B * B_t
    dw = -a * w - b * z - c * w * w * z
    dz = -a * z - b * w - c * w * z * z
    if model == "toy":
        dw = dw + w * w
        dz = dz - z * z
    return dw, dz


# --------------------------------------------------------------------------
# integration


def _base_sampler(profile: CurvatureProfile, x: float):
    def kk(t):
        c = profile.evaluate(x, t, check=False)
        return float(c.k), float(c.k_t)
    return kk


class _System:
    """Packs (w, z[, B, B_t]) into one state vector."""

    def __init__(self, profile, x, metric_column, model):
        self.kk = _base_sampler(profile, x)
        self.metric_column = metric_column
        self.model = model

    def metric(self, t, y):
        if self.metric_column is None:
            return y[2], y[3]
        Bf, Btf = self.metric_column
        return float(Bf(t)), float(Btf(t))

    def rhs(self, t, y):
        k, k_t = self.kk(t)
        B, B_t = self.metric(t, y)
        w, z = y[0], y[1]
        if self.model == "scalar":
            z = -w
            dw, _ = riemann_rhs(w, z, k, k_t, B, B_t)
            dw += w * w
            dz = -dw
        else:
            dw, dz = riemann_rhs(w, z, k, k_t, B, B_t, self.model)
        out = [dw, dz]
        if self.metric_column is None:
            out += [B_t, k * k * B]
        return np.array(out)

    def rk4(self, t, y, h):
        k1 = self.rhs(t, y)
        k2 = self.rhs(t + h / 2, y + h / 2 * k1)
        k3 = self.rhs(t + h / 2, y + h / 2 * k2)
        k4 = self.rhs(t + h, y + h * k3)
        return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _blowup_check(y, hyperbolic_start, ceiling, floor):
    w, z = y[0], y[1]
    if not (np.isfinite(w) and np.isfinite(z)) or abs(w) + abs(z) > ceiling:
        return "state_overflow"
    if hyperbolic_start and w - z <= floor:
        return "hyperbolicity_loss"
    return None


def integrate_riemann_ode(w0: float, z0: float, profile: CurvatureProfile, t_end: float,
                          dt: float, metric_column: tuple[Callable, Callable] | None = None,
                          x: float = 0.0, output_times=None, ceiling: float = CEILING,
                          floor: float = FLOOR, check_tol: float | None = None,
                          max_depth: int = 40, model: str = "riemann") -> Trajectory:
    """Classical RK4 for the homogeneous invariant system.

    Without ``metric_column`` the pair (B, B_t) is integrated alongside from
    B(0)=1, B_t(0)=0, so the result does not depend on a metric grid.  With
    ``check_tol`` every step is compared against two half steps and
    subdivided while the difference exceeds ``check_tol*(1+|y|)``.
    Trajectories are stored at ``output_times`` (default every dt) by cubic
    Hermite interpolation on the accepted steps.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if model == "scalar":
        z0 = -w0
    if not profile.x_independent and profile.kind != "custom":
        raise ValueError("profile must be x-independent on this column")
    sys_ = _System(profile, x, metric_column, model)
    y = np.array([w0, z0] + ([1.0, 0.0] if metric_column is None else []), dtype=float)
    hyper = w0 > z0
    ts, ys, fs = [0.0], [y.copy()], [sys_.rhs(0.0, y)]
    report = BlowupReport(False)
    t = 0.0
    n = max(1, math.ceil(t_end / dt - 1e-9))
    h0 = t_end / n

    def advance(t, y, h, depth):
        full = sys_.rk4(t, y, h)
        if check_tol is None:
            return [(t + h, full)]
        half = sys_.rk4(t, y, h / 2)
        two = sys_.rk4(t + h / 2, half, h / 2)
        err = np.max(np.abs(two[:2] - full[:2]) / (1 + np.abs(two[:2])))
        if np.isfinite(err) and err <= check_tol:
            return [(t + h / 2, half), (t + h, two)]
        if depth >= max_depth:
            raise StepRefinementRequired(t, h / 2)
        out = []
        tt, yy = t, y
        for piece in (0, 1):
            sub = advance(tt, yy, h / 2, depth + 1)
            for tt, yy in sub:
                out.append((tt, yy))
                if _blowup_check(yy, hyper, ceiling, floor):
                    return out
        return out

    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            try:
                steps = advance(t, y, h0, 0)
                # pin the step end to the exact grid time to avoid drift
                steps[-1] = ((i + 1) * h0, steps[-1][1])
            except StepRefinementRequired:
                if check_tol is not None and np.max(np.abs(y[:2])) > 1e-3 * ceiling:
                    report = BlowupReport(True, float(t), "state_overflow")
                    break
                raise
            stop = False
            for tn, yn in steps:
                cause = _blowup_check(yn, hyper, ceiling, floor)
                if cause:
                    report = BlowupReport(True, float(tn), cause)
                    stop = True
                    break
                t, y = tn, yn
                ts.append(t)
                ys.append(y.copy())
                fs.append(sys_.rhs(t, y))
            if stop:
                break

    ts_a = np.array(ts)
    ys_a = np.array(ys)
    fs_a = np.array(fs)
    if output_times is None:
        grid = h0 * np.arange(n + 1)
        out_t = grid[grid <= ts_a[-1] + 1e-12]
    else:
        out_t = np.asarray(output_times, dtype=float)
        out_t = out_t[out_t <= ts_a[-1] + 1e-12]
    Y = _dense(ts_a, ys_a, fs_a, out_t)
    kk = np.array([sys_.kk(tt)[0] for tt in out_t])
    if metric_column is None:
        B, Bt = Y[:, 2], Y[:, 3]
    else:
        B = np.array([float(metric_column[0](tt)) for tt in out_t])
        Bt = np.array([float(metric_column[1](tt)) for tt in out_t])
    w = Y[:, 0]
    z = -w if model == "scalar" else Y[:, 1]
    return Trajectory(out_t, w, z, kk, B, Bt, report)


def _dense(ts, ys, fs, out_t):
    j = np.clip(np.searchsorted(ts, out_t, side="right") - 1, 0, max(len(ts) - 2, 0))
    if len(ts) == 1:
        return np.repeat(ys[:1], len(out_t), axis=0)
    h = ts[j + 1] - ts[j]
    s = ((out_t - ts[j]) / h)[:, None]
    hh = h[:, None]
    s2, s3 = s * s, s * s * s
    Y = ((2 * s3 - 3 * s2 + 1) * ys[j] + (s3 - 2 * s2 + s) * hh * fs[j]
         + (-2 * s3 + 3 * s2) * ys[j + 1] + (s3 - s2) * hh * fs[j + 1])
    exact = np.isclose(out_t, ts[j], rtol=0, atol=1e-14)
    Y[exact] = ys[j][exact]
    return Y


def detect_blowup(w0: float, z0: float, profile: CurvatureProfile, t_max: float,
                  metric_column=None, dt: float = 1e-3, tol: float = 1e-10) -> BlowupReport:
    """Locate the first blowup time on [0, t_max], if any.

    Constant curvature with the closed-form metric cosh(k0 t) uses bisection
    on the radicand; everything else integrates with local step halving.
    """
    if w0 == 0 and z0 == 0:
        return BlowupReport(False)
    k0 = profile.params.get("k0", 1.0)
    if profile.kind == "constant" and profile.x_independent and metric_column is None and k0 > 0:
        def rad(t):
            return radicand(w0, z0, math.cosh(k0 * t), k0 * math.sinh(k0 * t), k0)
        grid = np.linspace(0.0, t_max, max(2, int(t_max / dt) + 1))
        prev = grid[0]
        for t in grid[1:]:
            if rad(t) <= 0:
                lo, hi = prev, t
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    lo, hi = (lo, mid) if rad(mid) <= 0 else (mid, hi)
                return BlowupReport(True, float(0.5 * (lo + hi)), "denominator_root")
            prev = t
        return BlowupReport(False)
    traj = integrate_riemann_ode(w0, z0, profile, t_max, dt, metric_column,
                                 check_tol=1e-8, output_times=[0.0])
    return traj.blowup


def integrate_toy_model(model: str, w0: float, profile: CurvatureProfile, t_max: float,
                        dt: float, z0: float | None = None, metric_column=None,
                        ceiling: float = CEILING):
    """Toy models with the extra quadratic terms; returns (trajectory, verdict).

    ``model`` is "full" (two equations) or "scalar" (w = -z imposed).
    The verdict is "global" iff the trajectory stays below the ceiling up to
    t_max; the integral of k over [0, t_max] is reported alongside.
    """
    if model not in ("full", "scalar"):
        raise ValueError("model must be 'full' or 'scalar'")
    if model == "full" and z0 is None:
        raise ValueError("full model needs z0")
    traj = integrate_riemann_ode(w0, -w0 if model == "scalar" else z0, profile, t_max, dt,
                                 metric_column, check_tol=1e-8, ceiling=ceiling,
                                 floor=-math.inf, model="toy" if model == "full" else "scalar")
    if profile.kind == "custom":
        from scipy import integrate
        int_k = integrate.quad(lambda t: float(profile.k(0.0, t)), 0, t_max, limit=400)[0]
    else:
        int_k = profile.base_integral(0.0, t_max) * float(profile.modulation.values(0.0)[0])
    verdict = {
        "global": not traj.blowup.blew_up,
        "t_star": traj.blowup.t_star,
        "sup_abs_w": float(np.max(np.abs(traj.w))),
        "int_k": int_k,
    }
    return traj, verdict
