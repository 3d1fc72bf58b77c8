# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled predictor-corrector step; same contract as ``_kernels_py.pc_step``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _diff(const double[:] u, double a, Py_ssize_t i, Py_ssize_t n,
                         double dx, bint periodic) noexcept nogil:
    cdef Py_ssize_t ip = i + 1, im = i - 1
    cdef double up, um, ui = u[i]
    if periodic:
        if ip == n:
            ip = 0
        if im < 0:
            im = n - 1
        up = u[ip]
        um = u[im]
    else:
        up = u[ip] if ip < n else ui
        um = u[im] if im >= 0 else ui
    if a > 0:
        return (ui - um) / dx
    if a < 0:
        return (up - ui) / dx
    return (up - um) / (2.0 * dx)


cdef void _rhs(const double[:] r, const double[:] s, const double[:] rt,
               const double[:] st, const double[:, :] D, double dx, bint periodic,
               bint tilde, double[:] dr, double[:] ds, double[:] drt,
               double[:] dst) noexcept nogil:
    cdef Py_ssize_t i, n = r.shape[0]
    cdef double k, kx, c1, c2k, e, p, ri, si, ar, as_, rs, lin, f, g
    cdef double q, f_r, f_s, g_s, g_r, linx, dxf, dxg, gap
    for i in range(n):
        k = D[0, i]
        c1 = D[2, i]
        c2k = D[3, i]
        e = D[4, i]
        p = D[5, i]
        ri = r[i]
        si = s[i]
        ar = k * si
        as_ = k * ri
        rs = ri * si
        lin = -c1 * (ri + si) - c2k * rs
        f = lin + e * ri * ri - p * ri * rs
        g = lin + e * si * si - p * rs * si
        dr[i] = -ar * _diff(r, ar, i, n, dx, periodic) + f
        ds[i] = -as_ * _diff(s, as_, i, n, dx, periodic) + g
        if tilde:
            kx = D[1, i]
            q = -p * rs + e * (ri + si)
            f_r = -c1 - c2k * si + 2 * e * ri - 2 * p * rs
            f_s = -c1 - c2k * ri - p * ri * ri
            g_s = -c1 - c2k * ri + 2 * e * si - 2 * p * rs
            g_r = -c1 - c2k * si - p * si * si
            linx = -D[6, i] * (ri + si) - D[7, i] * rs
            dxf = linx + D[8, i] * ri * ri - D[9, i] * ri * rs
            dxg = linx + D[8, i] * si * si - D[9, i] * rs * si
            gap = ri - si
            drt[i] = (-ar * _diff(rt, ar, i, n, dx, periodic)
                      + (q + f_r - kx * si) * rt[i] + f_s * st[i] + gap * dxf)
            dst[i] = (-as_ * _diff(st, as_, i, n, dx, periodic)
                      + g_r * rt[i] + (q + g_s - kx * ri) * st[i] + gap * dxg)


def pc_step(r, s, rt, st, D0, D1, E0, E1, double dt, double dx, bint periodic, bint tilde):
    cdef Py_ssize_t i, n = r.shape[0]
    cdef double[:] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[:] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef double[:] rtv, stv
    if tilde:
        rtv = np.ascontiguousarray(rt, dtype=np.float64)
        stv = np.ascontiguousarray(st, dtype=np.float64)
    else:
        rtv = np.zeros(n)
        stv = rtv
    cdef double[:, :] d0 = np.ascontiguousarray(D0, dtype=np.float64)
    cdef double[:, :] d1 = np.ascontiguousarray(D1, dtype=np.float64)
    cdef double[:, :] e0 = np.ascontiguousarray(E0, dtype=np.float64)
    cdef double[:, :] e1 = np.ascontiguousarray(E1, dtype=np.float64)
    cdef double[:] dr = np.empty(n), ds = np.empty(n), drt = np.empty(n), dst = np.empty(n)
    cdef double[:] rp = np.empty(n), sp = np.empty(n), rtp = np.empty(n), stp = np.empty(n)
    r1 = np.empty(n)
    s1 = np.empty(n)
    cdef double[:] r1v = r1, s1v = s1
    cdef double[:] rt1v, st1v
    cdef double h = 0.5 * dt
    with nogil:
        _rhs(rv, sv, rtv, stv, d0, dx, periodic, tilde, dr, ds, drt, dst)
        for i in range(n):
            rp[i] = rv[i] + h * (dr[i] + e0[0, i])
            sp[i] = sv[i] + h * (ds[i] + e0[1, i])
            if tilde:
                rtp[i] = rtv[i] + h * drt[i]
                stp[i] = stv[i] + h * dst[i]
        _rhs(rp, sp, rtp, stp, d1, dx, periodic, tilde, dr, ds, drt, dst)
        for i in range(n):
            r1v[i] = rv[i] + dt * (dr[i] + e1[0, i])
            s1v[i] = sv[i] + dt * (ds[i] + e1[1, i])
    if not tilde:
        return r1, s1, None, None
    rt1 = np.empty(n)
    st1 = np.empty(n)
    rt1v = rt1
    st1v = st1
    for i in range(n):
        rt1v[i] = rtv[i] + dt * drt[i]
        st1v[i] = stv[i] + dt * dst[i]
    return r1, s1, rt1, st1
