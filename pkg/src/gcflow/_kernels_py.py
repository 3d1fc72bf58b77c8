"""Pure numpy predictor-corrector step (fallback for the compiled kernel).

Coefficient packs have rows
    0 k, 1 k_x, 2 c1, 3 c2k, 4 e, 5 p, 6 c1_x, 7 c2k_x, 8 e_x, 9 p_x
with c1 = B_t/B + k_t/(2k), c2k = (B_x/B + 3k_x/(2k)) k, e = k_x/2,
p = B B_t k^2 and the ``_x`` rows their x-derivatives.
"""
import numpy as np


def upwind_diff(u, a, dx, periodic):
    """One-sided difference chosen by the sign of ``a``; centered on ties."""
    if periodic:
        up = np.roll(u, -1)
        um = np.roll(u, 1)
    else:
        up = np.empty_like(u)
        um = np.empty_like(u)
        up[:-1] = u[1:]
        up[-1] = u[-1]
        um[1:] = u[:-1]
        um[0] = u[0]
    back = (u - um) / dx
    fwd = (up - u) / dx
    cen = (up - um) / (2.0 * dx)
    return np.where(a > 0, back, np.where(a < 0, fwd, cen))


def _rhs(r, s, rt, st, D, dx, periodic, tilde):
    k, kx, c1, c2k, e, p = D[0], D[1], D[2], D[3], D[4], D[5]
    ar = k * s
    as_ = k * r
    rs = r * s
    lin = -c1 * (r + s) - c2k * rs
    f = lin + e * r * r - p * r * rs
    g = lin + e * s * s - p * rs * s
    dr = -ar * upwind_diff(r, ar, dx, periodic) + f
    ds = -as_ * upwind_diff(s, as_, dx, periodic) + g
    if not tilde:
        return dr, ds, None, None
    c1x, c2kx, ex, px = D[6], D[7], D[8], D[9]
    q = -p * rs + e * (r + s)
    f_r = -c1 - c2k * s + 2 * e * r - 2 * p * rs
    f_s = -c1 - c2k * r - p * r * r
    g_s = -c1 - c2k * r + 2 * e * s - 2 * p * rs
    g_r = -c1 - c2k * s - p * s * s
    linx = -c1x * (r + s) - c2kx * rs
    dxf = linx + ex * r * r - px * r * rs
    dxg = linx + ex * s * s - px * rs * s
    gap = r - s
    drt = (-ar * upwind_diff(rt, ar, dx, periodic)
           + (q + f_r - kx * s) * rt + f_s * st + gap * dxf)
    dst = (-as_ * upwind_diff(st, as_, dx, periodic)
           + g_r * rt + (q + g_s - kx * r) * st + gap * dxg)
    return dr, ds, drt, dst


def pc_step(r, s, rt, st, D0, D1, E0, E1, dt, dx, periodic, tilde):
    """Explicit midpoint step: half step with D0/E0, full step with D1/E1."""
    dr, ds, drt, dst = _rhs(r, s, rt, st, D0, dx, periodic, tilde)
    h = 0.5 * dt
    rp = r + h * (dr + E0[0])
    sp = s + h * (ds + E0[1])
    if tilde:
        rtp = rt + h * drt
        stp = st + h * dst
    else:
        rtp = stp = None
    dr, ds, drt, dst = _rhs(rp, sp, rtp, stp, D1, dx, periodic, tilde)
    r1 = r + dt * (dr + E1[0])
    s1 = s + dt * (ds + E1[1])
    if tilde:
        return r1, s1, rt + dt * drt, st + dt * dst
    return r1, s1, None, None
