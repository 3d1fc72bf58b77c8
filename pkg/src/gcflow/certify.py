"""Runtime certificates built from the comparison-principle control functions.

Given epsilon, mu and a start time t0 in the tail, four explicit envelopes
bound the solution of the weighted system:

    phi1 dominates |r + s|,   phi2 dominates |r - s|,
    phi3 dominates |r~|, |s~|, and phi4 bounds r - s from below.

``monitor_bounds`` compares a computed evolution against them cell by cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import tail_integral
from .hyperbolic import Coefficients, InvariantField, erode, source_terms
from .profiles import CurvatureProfile

BOUND_NAMES = ("phi1", "phi2", "phi3", "phi4")
MARGIN_HEADER = "t,margin_phi1,margin_phi2,margin_phi3,margin_phi4,C_sum,C_dt,n_cells"

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class ConfigurationError(ValueError):
    pass


class EnvelopeRefused(ConfigurationError):
    def __init__(self, a0):
        super().__init__("tail integral of k diverges (a0 = inf); no envelope exists")
        self.a0 = a0


def cumulative_integral(fn, ts):
    """int_{ts[0]}^{ts[j]} fn(t) dt for each j, 8-point Gauss-Legendre per interval.

    ``fn`` maps an array of times to an array of shape (len(times), n).
    """
    ts = np.asarray(ts, dtype=float)
    a, b = ts[:-1], ts[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    vals = fn(nodes)
    vals = vals.reshape(len(a), len(_GL_X), -1)
    pieces = np.einsum("ijk,j->ik", vals, _GL_W) * half[:, None]
    return np.vstack([np.zeros((1, pieces.shape[1])), np.cumsum(pieces, axis=0)])


@dataclass
class ControlEnvelope:
    epsilon: float
    mu: float
    t0: float
    a0: float
    xs: np.ndarray
    ts: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    phi4: np.ndarray
    int_k: np.ndarray
    epsilon_low: float
    refused: bool = False

    @classmethod
    def unbounded(cls, xs, ts, epsilon=0.0, mu=0.0, t0=0.0):
        """Placeholder used when no envelope exists (divergent tail)."""
        shape = (len(ts), len(xs))
        inf = np.full(shape, np.inf)
        return cls(epsilon, mu, t0, math.inf, np.asarray(xs), np.asarray(ts), inf, inf, inf,
                   -inf, np.full(shape, np.nan), epsilon, refused=True)


def control_envelope(profile: CurvatureProfile, epsilon: float, mu: float, t0: float,
                     xs, ts, epsilon_low: float | None = None) -> ControlEnvelope:
    """The four control functions on the grid ts (which must start at t0).

    ``epsilon_low`` sets the level of the lower bound phi4 (defaults to
    epsilon).  Raises EnvelopeRefused for divergent tails.
    """
    if not (0 < epsilon < 1 and 0 < mu < 1):
        raise ConfigurationError("epsilon and mu must lie in (0, 1)")
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if abs(ts[0] - t0) > 1e-12 * max(1.0, t0):
        raise ConfigurationError("envelope grid must start at t0")
    if t0 <= 0:
        raise ConfigurationError("t0 must be positive")
    tail, _ = tail_integral(profile, t0, xs)
    if not math.isfinite(tail):
        raise EnvelopeRefused(math.inf)
    a0 = 2.0 + tail
    eps_low = epsilon if epsilon_low is None else epsilon_low

    def k_of(tt):
        X, T = np.meshgrid(xs, tt)
        return profile.k(X, T)

    int_k = cumulative_integral(k_of, ts)
    int_k2s2 = cumulative_integral(lambda tt: k_of(tt) ** 2 * tt[:, None] ** 2, ts)
    kk = k_of(ts)
    k0 = kk[0][None, :]
    T = ts[:, None]
    phi1 = 2 * epsilon * k0 * t0 ** 2 / (kk * T ** 2) + epsilon / (kk * T ** 2) * int_k2s2
    phi2 = epsilon * (2 + int_k)
    phi3 = mu * epsilon * (2 + int_k)
    phi4 = eps_low * (1 - 3 * a0 * mu * int_k)
    return ControlEnvelope(epsilon, mu, t0, a0, xs, ts, phi1, phi2, phi3, phi4, int_k, eps_low)


def a0_constant(profile: CurvatureProfile, t0: float, xs=None) -> float:
    return 2.0 + tail_integral(profile, t0, xs)[0]


@dataclass
class CertificateReport:
    passed: dict
    worst_margin: dict
    first_violation_time: dict
    C_sum: float
    C_dt: float
    certified: bool
    margins: np.ndarray  # per snapshot: t, four margins, C_sum, C_dt, cell count
    first_invalid_time: float | None = None
    notes: list = field(default_factory=list)

    @property
    def first_failure(self):
        times = [t for t in self.first_violation_time.values() if t is not None]
        if self.first_invalid_time is not None:
            times.append(self.first_invalid_time)
        return min(times) if times else None

    def summary(self) -> dict:
        return {"certified": self.certified, "passed": self.passed,
                "worst_margin": self.worst_margin, "C_sum": self.C_sum, "C_dt": self.C_dt,
                "first_failure": self.first_failure}


def monitor_bounds(field_: InvariantField, env: ControlEnvelope, coeffs,
                   halo: int = 1) -> CertificateReport:
    """Pointwise checks of the four envelopes on valid cells with t >= t0.

    Margins are relative (bound - value)/|bound| for the upper bounds and
    (value - phi4)/epsilon_low for the lower bound; a negative margin is a
    violation.  The measured C constants are the sups of
    |r+s|/(eps k t) and max(|r_t|, |s_t|)/(eps (k + t|k_t|)), with r_t from
    the equation itself.
    """
    ts = field_.ts
    if env.refused:
        env_index = {j: None for j in range(len(ts))}
    else:
        env_index = {}
        for j, t in enumerate(ts):
            hit = np.nonzero(np.isclose(env.ts, t, rtol=1e-12, atol=1e-12))[0]
            env_index[j] = int(hit[0]) if len(hit) else None
    rows = []
    worst = {b: math.inf for b in BOUND_NAMES}
    first = {b: None for b in BOUND_NAMES}
    C_sum = C_dt = 0.0
    first_invalid = None
    eps = env.epsilon if env.epsilon > 0 else 1.0
    for j, t in enumerate(ts):
        if t < env.t0 - 1e-12:
            continue
        if first_invalid is None and (field_.cause[j] > 1).any():
            first_invalid = float(t)
        mask = erode(field_.valid[j], halo, field_.periodic)
        if not mask.any():
            if first_invalid is None:
                first_invalid = float(t)
            continue
        r, s = field_.r[j], field_.s[j]
        rt, st = field_.r_tilde[j], field_.s_tilde[j]
        c = coeffs.at(t)
        m = {}
        e = env_index[j]
        if e is None:
            m = {b: math.inf for b in BOUND_NAMES[:3]}
            m["phi4"] = math.inf
        else:
            p1, p2, p3, p4 = env.phi1[e], env.phi2[e], env.phi3[e], env.phi4[e]
            with np.errstate(invalid="ignore"):
                m["phi1"] = np.min(((p1 - np.abs(r + s)) / p1)[mask])
                m["phi2"] = np.min(((p2 - np.abs(r - s)) / p2)[mask])
                tt = np.maximum(np.abs(rt), np.abs(st))
                m["phi3"] = np.nanmin(((p3 - tt) / p3)[mask])
                m["phi4"] = np.min(((r - s - p4) / env.epsilon_low)[mask])
        for b in BOUND_NAMES:
            worst[b] = min(worst[b], float(m[b]))
            if m[b] < 0 and first[b] is None:
                first[b] = float(t)
        if t > 0:
            f, g = source_terms(r, s, c)
            with np.errstate(all="ignore"):
                rx = np.gradient(r, field_.dx) if not field_.periodic else (
                    np.roll(r, -1) - np.roll(r, 1)) / (2 * field_.dx)
                sx = np.gradient(s, field_.dx) if not field_.periodic else (
                    np.roll(s, -1) - np.roll(s, 1)) / (2 * field_.dx)
                r_t = f - c.k * s * rx
                s_t = g - c.k * r * sx
                cs = np.max((np.abs(r + s) / (eps * c.k * t))[mask])
                cd = np.max((np.maximum(np.abs(r_t), np.abs(s_t))
                             / (eps * (c.k + t * np.abs(c.k_t))))[mask])
            C_sum, C_dt = max(C_sum, float(cs)), max(C_dt, float(cd))
        else:
            cs = cd = math.nan
        rows.append([t, m["phi1"], m["phi2"], m["phi3"], m["phi4"], cs, cd, int(mask.sum())])
    losses = [t for key, t in field_.meta.get("first_loss", {}).items()
              if key != "domain_of_dependence" and t >= env.t0 - 1e-12]
    if losses:
        first_invalid = min(losses + ([first_invalid] if first_invalid is not None else []))
    passed = {b: worst[b] >= 0 for b in BOUND_NAMES}
    certified = (not env.refused and all(passed.values()) and first_invalid is None
                 and bool(rows))
    return CertificateReport(passed, worst, first, C_sum, C_dt, certified,
                             np.array(rows, dtype=float).reshape(-1, 8), first_invalid)


def hong_growth_bound(H: float, t, init_max: float):
    """init_max * exp(5 H t)."""
    return init_max * np.exp(5.0 * H * np.asarray(t, dtype=float))


def threshold_plan(T: float, H: float, epsilon: float) -> dict:
    """Largest admissible eta0 with eta0 exp(30 H T) <= epsilon, and mu = sqrt(epsilon).

    ``log_eta0`` is exact even when ``eta0`` underflows to zero.
    """
    if not 0 < epsilon < 1:
        raise ConfigurationError("epsilon must lie in (0, 1)")
    eta0 = epsilon * math.exp(-30.0 * H * T)
    return {"eta0": eta0, "log_eta0": math.log(epsilon) - 30.0 * H * T,
            "mu": math.sqrt(epsilon), "underflow": eta0 == 0.0}


def coefficient_sup_field(c: Coefficients):
    """Pointwise max of the coefficient list entering the growth constant H.

    Includes |d_t ln B|, |d_t ln k|, |k d_x ln B|, |k|, |d_xx k|,
    |B B_t k^2| and the x-derivatives of each (analytic where possible).
    """
    bt, bx = c.B_t / c.B, c.B_x / c.B
    items = [
        bt, c.B_xt / c.B - bt * bx,
        c.k_t / c.k, (c.k_xt * c.k - c.k_x * c.k_t) / c.k ** 2,
        c.k * bx, c.k_x * bx + c.k * (c.B_xx / c.B - bx ** 2),
        c.k, c.k_x, c.k_xx,
        c.B * c.B_t * c.k ** 2,
        (c.B_x * c.B_t + c.B * c.B_xt) * c.k ** 2 + 2 * c.B * c.B_t * c.k * c.k_x,
    ]
    return np.max(np.abs(np.array(items)), axis=0)


def global_growth_constant(coeffs, ts, region=None) -> float:
    """H = 1 + sup of ``coefficient_sup_field`` over the sampled region."""
    best = 0.0
    for j, t in enumerate(ts):
        v = coefficient_sup_field(coeffs.at(t))
        if region is not None:
            v = v[region[j]]
        if v.size:
            best = max(best, float(np.max(v)))
    return 1.0 + best


def hong_monitor(field_: InvariantField, H: float, init_max: float, region=None) -> dict:
    """Check |r|, |s|, |r_x|, |s_x| <= init_max exp(5 H t) on valid cells."""
    worst = math.inf
    sup_ratio = 0.0
    for j, t in enumerate(field_.ts):
        mask = erode(field_.valid[j], 1, field_.periodic)
        if region is not None:
            mask &= region[j]
        if not mask.any():
            continue
        r, s = field_.r[j], field_.s[j]
        if field_.periodic:
            rx = (np.roll(r, -1) - np.roll(r, 1)) / (2 * field_.dx)
            sx = (np.roll(s, -1) - np.roll(s, 1)) / (2 * field_.dx)
        else:
            rx, sx = np.gradient(r, field_.dx), np.gradient(s, field_.dx)
        val = np.max(np.maximum.reduce([np.abs(r), np.abs(s), np.abs(rx), np.abs(sx)])[mask])
        bound = float(hong_growth_bound(H, t, init_max))
        worst = min(worst, bound - val)
        if bound > 0:
            sup_ratio = max(sup_ratio, val / bound)
    return {"passed": worst >= 0, "worst_margin": worst, "sup_ratio": sup_ratio}
