"""Second fundamental form from the invariants and reconstruction of the surface.

With w = k r, z = k s and sqrt|g| = B the second form is

    L = 2 k B / (w - z),  M = -L (w + z) / 2,  N = (M^2 - k^2 B^2) / L,

so that L N - M^2 = -k^2 B^2.  The frame (X, X_x, X_t, n) is integrated
along the base line t = ts[0] from the node nearest x = 0, then up every
column, using the Gauss formulas for g = B^2 dx^2 + dt^2 and the
Weingarten relations.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .hyperbolic import ChartCoefficients, InvariantField

MESH_CSV_HEADER = "x,t,px,py,pz,res_I,res_comm,K_disc"
GAUGE = "X=0, X_x=(B,0,0), X_t=(0,1,0), n=(0,0,1) at the first t-node nearest x=0"


@dataclass
class SecondFundamentalForm:
    """L, M, N together with the metric data they were built from; arrays [t, x]."""

    xs: np.ndarray
    ts: np.ndarray
    L: np.ndarray
    M: np.ndarray
    N: np.ndarray
    k: np.ndarray
    B: np.ndarray
    B_t: np.ndarray
    B_x: np.ndarray
    valid: np.ndarray

    @property
    def det_residual(self):
        """L N - M^2 + k^2 B^2 on valid cells (NaN elsewhere)."""
        res = self.L * self.N - self.M ** 2 + (self.k * self.B) ** 2
        return np.where(self.valid, res, np.nan)


def sff_from_wz(w, z, k, B, floor: float = 1e-14):
    w, z = np.asarray(w, float), np.asarray(z, float)
    gap = w - z
    ok = gap > floor
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(ok, 2 * k * B / np.where(ok, gap, 1.0), np.nan)
        M = -L * (w + z) / 2
        N = (M * M - (k * B) ** 2) / L
    return L, M, N, ok


def wz_from_sff(L, M, N, k, B):
    """Inverse map (the N entry is implied by the Gauss equation and unused)."""
    return (-M + k * B) / L, (-M - k * B) / L


def second_fundamental_form(field_: InvariantField, metric, profile, coeffs=None,
                            floor: float = 1e-14) -> SecondFundamentalForm:
    """L, M, N on every snapshot of ``field_``; cells with w - z <= floor are excluded."""
    coeffs = coeffs if coeffs is not None else ChartCoefficients(profile, metric)
    shape = field_.r.shape
    out = {n: np.empty(shape) for n in ("k", "B", "B_t", "B_x")}
    for j, t in enumerate(field_.ts):
        c = coeffs.at(float(t))
        out["k"][j], out["B"][j], out["B_t"][j], out["B_x"][j] = c.k, c.B, c.B_t, c.B_x
    w, z = out["k"] * field_.r, out["k"] * field_.s
    L, M, N, ok = sff_from_wz(w, z, out["k"], out["B"], floor)
    return SecondFundamentalForm(field_.xs.copy(), field_.ts.copy(), L, M, N, out["k"],
                                 out["B"], out["B_t"], out["B_x"], ok & field_.valid)


# --------------------------------------------------------------------------
# frame integration


@dataclass
class ImmersionMesh:
    xs: np.ndarray
    ts: np.ndarray
    X: np.ndarray
    X_x: np.ndarray
    X_t: np.ndarray
    n: np.ndarray
    valid: np.ndarray
    res_I: np.ndarray
    res_comm: np.ndarray
    K_disc: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.valid.shape


def _mix(f0, f1, u):
    return {key: (v if key == "dir" else (1 - u) * v + u * f1[key]) for key, v in f0.items()}


def _rate(c):
    """Frame rotation rate per unit parameter (sets the sub-step count)."""
    if c["dir"] == "t":
        parts = [np.abs(c["M"]) / c["B"], np.abs(c["N"]), np.abs(c["Bt_B"])]
    else:
        parts = [np.abs(c["L"]) / c["B"], np.abs(c["M"]), np.abs(c["Bx_B"]),
                 np.abs(c["Bt_B"]) * c["B"]]
    return float(np.max(sum(parts)))


def _rk4(Y, h, f0, f1, max_turn=0.01):
    """RK4 across one grid interval with coefficients linear in the parameter.

    The interval is split so that the frame turns by at most ``max_turn``
    radians per sub-step.
    """
    n_sub = max(1, int(np.ceil(abs(h) * max(_rate(f0), _rate(f1)) / max_turn)))
    du = 1.0 / n_sub
    hs = h * du
    for m in range(n_sub):
        u = m * du
        ca, cm, cb = _mix(f0, f1, u), _mix(f0, f1, u + du / 2), _mix(f0, f1, u + du)
        k1 = _frame_rhs(Y, ca)
        k2 = _frame_rhs(Y + 0.5 * hs * k1, cm)
        k3 = _frame_rhs(Y + 0.5 * hs * k2, cm)
        k4 = _frame_rhs(Y + hs * k3, cb)
        Y = Y + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Y


def _frame_rhs(Y, c):
    # rows: X, X_x, X_t, n (3-vectors, optionally batched over columns) and
    # lam = ln B in the first slot of row 4; B^2 = exp(2 lam) keeps the
    # connection metric-compatible under interpolated coefficients
    X, Xx, Xt, n = Y[0], Y[1], Y[2], Y[3]
    lam = Y[4][..., :1]
    B2 = np.exp(2 * lam)
    dlam = np.zeros_like(Y[4])
    if c["dir"] == "t":
        dlam[..., :1] = c["Bt_B"]
        return np.array([Xt,
                         c["Bt_B"] * Xx + c["M"] * n,
                         c["N"] * n,
                         -c["M"] / B2 * Xx - c["N"] * Xt,
                         dlam])
    dlam[..., :1] = c["Bx_B"]
    return np.array([Xx,
                     c["Bx_B"] * Xx - c["Bt_B"] * B2 * Xt + c["L"] * n,
                     c["Bt_B"] * Xx + c["M"] * n,
                     -c["L"] / B2 * Xx - c["M"] * Xt,
                     dlam])


def _coeffs(sff, j, i, direction):
    B = sff.B[j, i]
    d = {"dir": direction, "B": B, "Bt_B": sff.B_t[j, i] / B, "M": sff.M[j, i],
         "N": sff.N[j, i], "L": sff.L[j, i], "Bx_B": sff.B_x[j, i] / B}
    # broadcast scalars against the 3-vector axis
    return {key: (v[..., None] if isinstance(v, np.ndarray) else v) for key, v in d.items()}


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def integrate_frame(sff: SecondFundamentalForm, metric=None, origin_x: float = 0.0,
                    degeneration: float = 2.0, curvature: bool = True) -> ImmersionMesh:
    """Frame integration: base line along x at ts[0], then each column along t.

    The normal is renormalized after every step; tangents are not, so their
    lengths measure the metric error.  A column is truncated where a cell is
    invalid or |X_x|/B or |X_t| leaves [1/degeneration, degeneration].
    """
    xs, ts = sff.xs, sff.ts
    nt, nx = sff.L.shape
    Y = np.full((nt, nx, 5, 3), np.nan)
    valid = np.zeros((nt, nx), dtype=bool)
    i0 = int(np.argmin(np.abs(xs - origin_x)))
    B0 = sff.B[0, i0]
    Y[0, i0] = [[0, 0, 0], [B0, 0, 0], [0, 1, 0], [0, 0, 1], [np.log(B0), 0, 0]]
    base_ok = np.zeros(nx, dtype=bool)
    base_ok[i0] = bool(sff.valid[0, i0])
    for direction in (1, -1):
        i = i0
        while base_ok[i] and 0 <= i + direction < nx and sff.valid[0, i + direction]:
            h = xs[i + direction] - xs[i]
            Yn = _rk4(Y[0, i], h, _coeffs(sff, 0, i, "x"), _coeffs(sff, 0, i + direction, "x"))
            Yn[3] = _unit(Yn[3])
            i += direction
            Y[0, i] = Yn
            base_ok[i] = True
    valid[0] = base_ok
    alive = base_ok.copy()
    for j in range(nt - 1):
        idx = np.nonzero(alive & sff.valid[j + 1])[0]
        alive[:] = False
        if idx.size == 0:
            break
        h = ts[j + 1] - ts[j]
        Yn = np.moveaxis(_rk4(np.moveaxis(Y[j, idx], 0, 1), h, _coeffs(sff, j, idx, "t"),
                              _coeffs(sff, j + 1, idx, "t")), 1, 0)
        Yn[:, 3] = _unit(Yn[:, 3])
        lx = np.linalg.norm(Yn[:, 1], axis=1) / sff.B[j + 1, idx]
        lt = np.linalg.norm(Yn[:, 2], axis=1)
        ok = ((lx > 1 / degeneration) & (lx < degeneration)
              & (lt > 1 / degeneration) & (lt < degeneration) & np.isfinite(lx))
        idx = idx[ok]
        Y[j + 1, idx] = Yn[ok]
        valid[j + 1, idx] = True
        alive[idx] = True
    X, Xx, Xt, n = (Y[..., m, :].copy() for m in range(4))
    res_I = first_form_residual(Xx, Xt, sff.B)
    res_comm = commutator_residual(Xx, Xt, xs, ts)
    mesh = ImmersionMesh(xs, ts, X, Xx, Xt, n, valid, res_I, res_comm,
                         np.full((nt, nx), np.nan), {"gauge": GAUGE, "origin_index": i0})
    if curvature:
        mesh.K_disc = discrete_curvature(mesh)
    return mesh


def first_form_residual(Xx, Xt, B):
    """max(|X_x.X_x/B^2 - 1|, |X_x.X_t|/B, |X_t.X_t - 1|) per node."""
    gxx = np.einsum("...i,...i", Xx, Xx) / B ** 2 - 1
    gxt = np.einsum("...i,...i", Xx, Xt) / B
    gtt = np.einsum("...i,...i", Xt, Xt) - 1
    return np.maximum.reduce([np.abs(gxx), np.abs(gxt), np.abs(gtt)])


def commutator_residual(Xx, Xt, xs, ts):
    """|d_t(X_x) - d_x(X_t)| by centered differences (NaN at the rim)."""
    out = np.full(Xx.shape[:2], np.nan)
    if len(xs) < 3 or len(ts) < 3:
        return out
    dt_Xx = (Xx[2:, 1:-1] - Xx[:-2, 1:-1]) / (ts[2:, None, None] - ts[:-2, None, None])
    dx_Xt = (Xt[1:-1, 2:] - Xt[1:-1, :-2]) / (xs[None, 2:, None] - xs[None, :-2, None])
    out[1:-1, 1:-1] = np.linalg.norm(dt_Xx - dx_Xt, axis=-1)
    return out


# --------------------------------------------------------------------------
# discrete curvature


def discrete_curvature(mesh: ImmersionMesh, radius: int = 2) -> np.ndarray:
    """Gauss curvature by least-squares quadric fit over a (2 radius + 1)^2 stencil.

    Neighbours are expressed in the tangent frame of the integrated normal and
    h = a u^2 + b u v + c v^2 + d u + e v is fitted; K = (4ac - b^2)/(1 + d^2 + e^2)^2.
    """
    nt, nx = mesh.valid.shape
    K = np.full((nt, nx), np.nan)
    offs = [(a, b) for a in range(-radius, radius + 1) for b in range(-radius, radius + 1)
            if (a, b) != (0, 0)]
    for j in range(radius, nt - radius):
        for i in range(radius, nx - radius):
            if not mesh.valid[j - radius:j + radius + 1, i - radius:i + radius + 1].all():
                continue
            n = mesh.n[j, i]
            e1 = _unit(mesh.X_x[j, i] - np.dot(mesh.X_x[j, i], n) * n)
            e2 = np.cross(n, e1)
            P = np.array([mesh.X[j + a, i + b] for a, b in offs]) - mesh.X[j, i]
            u, v, hgt = P @ e1, P @ e2, P @ n
            scale = np.sqrt(np.mean(u * u + v * v))
            u, v = u / scale, v / scale
            A = np.column_stack([u * u, u * v, v * v, u, v])
            (a, b, c, d, e), *_ = np.linalg.lstsq(A, hgt, rcond=None)
            a, b, c, d, e = a / scale ** 2, b / scale ** 2, c / scale ** 2, d / scale, e / scale
            K[j, i] = (4 * a * c - b * b) / (1 + d * d + e * e) ** 2
    return K


def triangles(valid) -> list[tuple[tuple[int, int], ...]]:
    """Two triangles per valid quad, diagonal lower-left to upper-right."""
    nt, nx = valid.shape
    out = []
    for j in range(nt - 1):
        for i in range(nx - 1):
            if valid[j, i] and valid[j, i + 1] and valid[j + 1, i] and valid[j + 1, i + 1]:
                ll, lr, ul, ur = (j, i), (j, i + 1), (j + 1, i), (j + 1, i + 1)
                out.append((ll, lr, ur))
                out.append((ll, ur, ul))
    return out


def angle_defect_curvature(mesh: ImmersionMesh) -> np.ndarray:
    """Angle defect divided by one third of the incident triangle area."""
    nt, nx = mesh.valid.shape
    defect = np.full((nt, nx), 2 * np.pi)
    area = np.zeros((nt, nx))
    count = np.zeros((nt, nx), dtype=int)
    for tri in triangles(mesh.valid):
        P = [mesh.X[v] for v in tri]
        a2 = 0.5 * np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0]))
        for m, v in enumerate(tri):
            p, q, r = P[m], P[(m + 1) % 3], P[(m + 2) % 3]
            e1, e2 = q - p, r - p
            ang = np.arccos(np.clip(np.dot(e1, e2) / np.linalg.norm(e1) / np.linalg.norm(e2),
                                    -1, 1))
            defect[v] -= ang
            area[v] += a2 / 3
            count[v] += 1
    K = np.full((nt, nx), np.nan)
    inner = count == 6
    K[inner] = defect[inner] / area[inner]
    return K


# --------------------------------------------------------------------------
# verification and export


def _stats(a):
    a = a[np.isfinite(a)]
    if a.size == 0:
        return {"sup": float("nan"), "mean": float("nan")}
    return {"sup": float(a.max()), "mean": float(a.mean())}


def verify_immersion(mesh: ImmersionMesh, metric=None, profile=None, margin: int = 3) -> dict:
    """Residual report: first form, normal, commutator and relative curvature error."""
    v = mesh.valid
    n = mesh.n
    orth = np.maximum.reduce([
        np.abs(np.einsum("...i,...i", n, n) - 1),
        np.abs(np.einsum("...i,...i", n, mesh.X_x)) / np.linalg.norm(mesh.X_x, axis=-1),
        np.abs(np.einsum("...i,...i", n, mesh.X_t)),
    ])
    report = {
        "first_form": _stats(np.where(v, mesh.res_I, np.nan)),
        "normal": _stats(np.where(v, orth, np.nan)),
        "commutator": _stats(np.where(v, mesh.res_comm, np.nan)),
        "valid_fraction": float(v.mean()),
    }
    if profile is not None:
        T, X = np.meshgrid(mesh.ts, mesh.xs, indexing="ij")
        k2 = profile.evaluate(X, T, check=False).k ** 2
        rel = np.abs(mesh.K_disc + k2) / k2
        inner = np.zeros_like(v)
        inner[margin:-margin or None, margin:-margin or None] = True
        report["curvature"] = _stats(np.where(inner & v, rel, np.nan))
    return report


def _fmt(x) -> str:
    return "%.17g" % x


def export_mesh(mesh: ImmersionMesh, path, fmt: str | None = None) -> str:
    """Write OBJ, PLY or CSV; vertices in row-major (t, x) order, valid nodes only."""
    path = os.fspath(path)
    fmt = (fmt or os.path.splitext(path)[1].lstrip(".")).lower()
    if fmt not in ("obj", "ply", "csv"):
        raise ValueError(f"unknown mesh format {fmt!r}")
    nt, nx = mesh.valid.shape
    if not mesh.valid.any():
        raise ValueError("mesh has no valid vertices")
    index = -np.ones((nt, nx), dtype=int)
    order = [(j, i) for j in range(nt) for i in range(nx) if mesh.valid[j, i]]
    for m, (j, i) in enumerate(order):
        index[j, i] = m
    lines = []
    if fmt == "csv":
        lines.append(MESH_CSV_HEADER)
        for j, i in order:
            p = mesh.X[j, i]
            vals = [mesh.xs[i], mesh.ts[j], p[0], p[1], p[2], mesh.res_I[j, i],
                    mesh.res_comm[j, i], mesh.K_disc[j, i]]
            lines.append(",".join(_fmt(x) for x in vals))
    else:
        tris = [tuple(index[v] for v in tri) for tri in triangles(mesh.valid)]
        verts = [" ".join(_fmt(c) for c in mesh.X[j, i]) for j, i in order]
        if fmt == "obj":
            lines.append(f"# gauge: {mesh.meta.get('gauge', GAUGE)}")
            lines += ["v " + v for v in verts]
            lines += ["f %d %d %d" % (a + 1, b + 1, c + 1) for a, b, c in tris]
        else:
            lines += ["ply", "format ascii 1.0", f"element vertex {len(verts)}",
                      "property double x", "property double y", "property double z",
                      f"element face {len(tris)}", "property list uchar int vertex_indices",
                      "end_header"]
            lines += verts
            lines += ["3 %d %d %d" % t for t in tris]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write mesh to {path}: {exc}") from exc
    return path


def read_obj(path):
    """Vertices and faces of an OBJ written by ``export_mesh``."""
    verts, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:4]])
            elif line.startswith("f "):
                faces.append([int(x) - 1 for x in line.split()[1:4]])
    return np.array(verts), np.array(faces, dtype=int)
