import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcflow.immersion import (MESH_CSV_HEADER, ImmersionMesh, SecondFundamentalForm,
                              export_mesh, integrate_frame, read_obj, sff_from_wz, triangles,
                              verify_immersion, wz_from_sff)
from gcflow.io import read_csv


def plane_sff(nt=11, nx=9):
    xs = np.linspace(-1, 1, nx)
    ts = np.linspace(0, 2, nt)
    z = np.zeros((nt, nx))
    one = np.ones((nt, nx))
    return SecondFundamentalForm(xs, ts, z, z, z, z, one, z, z, one.astype(bool))


def test_plane_is_reproduced():
    sff = plane_sff()
    mesh = integrate_frame(sff, curvature=False)
    assert mesh.valid.all()
    T, X = np.meshgrid(sff.ts, sff.xs, indexing="ij")
    np.testing.assert_allclose(mesh.X[..., 0], X - sff.xs[mesh.meta["origin_index"]], atol=1e-10)
    np.testing.assert_allclose(mesh.X[..., 1], T, atol=1e-10)
    assert np.max(np.abs(mesh.X[..., 2])) <= 1e-10
    rep = verify_immersion(mesh)
    assert rep["first_form"]["sup"] <= 1e-10
    assert rep["normal"]["sup"] <= 1e-10
    assert rep["commutator"]["sup"] <= 1e-10


@pytest.mark.parametrize("c", [0.5, 1.0, 3.0])
def test_symmetric_state(c):
    L, M, N, ok = sff_from_wz(c, -c, 1.0, 1.0)
    assert ok
    assert L == pytest.approx(1 / c) and M == 0 and N == pytest.approx(-c)


def test_degenerate_cells_flagged():
    L, M, N, ok = sff_from_wz(np.array([0.1, 0.1]), np.array([0.1, 0.2]), 1.0, 1.0)
    assert not ok.any() and np.isnan(L).all()


@settings(max_examples=200, deadline=None)
@given(w=st.floats(-10, 10), gap=st.floats(1e-3, 10), k=st.floats(1e-3, 5),
       B=st.floats(0.1, 1e3))
def test_gauss_determinant_and_round_trip(w, gap, k, B):
    z = w - gap
    L, M, N, ok = sff_from_wz(w, z, k, B)
    assert ok
    scale = max(abs(L * N), M * M, (k * B) ** 2)
    assert abs(L * N - M * M + (k * B) ** 2) <= 1e-12 * scale
    w2, z2 = wz_from_sff(L, M, N, k, B)
    assert abs(w2 - w) <= 1e-12 * max(1.0, abs(w), gap)
    assert abs(z2 - z) <= 1e-12 * max(1.0, abs(z), gap)


def test_det_residual_masks_invalid():
    sff = plane_sff(3, 3)
    sff.valid[1, 1] = False
    res = sff.det_residual
    assert np.isnan(res[1, 1]) and np.nansum(np.abs(res)) == 0


def tiny_mesh():
    xs, ts = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    X = np.zeros((2, 2, 3))
    X[..., 0] = xs[None, :]
    X[..., 1] = ts[:, None]
    nan = np.full((2, 2), np.nan)
    return ImmersionMesh(xs, ts, X, X, X, X, np.ones((2, 2), bool), nan + 0, nan + 0, nan + 0)


def test_triangulation_of_one_quad(tmp_path):
    mesh = tiny_mesh()
    assert len(triangles(mesh.valid)) == 2
    verts, faces = read_obj(export_mesh(mesh, tmp_path / "q.obj"))
    assert verts.shape == (4, 3) and faces.shape == (2, 3)
    np.testing.assert_allclose(verts, mesh.X.reshape(-1, 3), atol=1e-9)


def test_obj_round_trip_of_integrated_mesh(tmp_path):
    mesh = integrate_frame(plane_sff(), curvature=False)
    verts, faces = read_obj(export_mesh(mesh, tmp_path / "p.obj"))
    np.testing.assert_allclose(verts, mesh.X.reshape(-1, 3), atol=1e-9)
    assert faces.max() == len(verts) - 1


def test_csv_and_ply_exports(tmp_path):
    mesh = tiny_mesh()
    path = export_mesh(mesh, tmp_path / "m.csv")
    with open(path) as fh:
        assert fh.readline().strip() == MESH_CSV_HEADER == "x,t,px,py,pz,res_I,res_comm,K_disc"
    _, data = read_csv(path)
    assert data.shape == (4, 8)
    ply = open(export_mesh(mesh, tmp_path / "m.ply")).read().splitlines()
    assert ply[0] == "ply" and "element vertex 4" in ply and "element face 2" in ply
    with pytest.raises(ValueError):
        export_mesh(mesh, tmp_path / "m.stl")


def test_export_is_deterministic(tmp_path):
    mesh = integrate_frame(plane_sff(), curvature=False)
    a = open(export_mesh(mesh, tmp_path / "a.obj"), "rb").read()
    b = open(export_mesh(mesh, tmp_path / "b.obj"), "rb").read()
    assert a == b


def test_empty_mesh_refused(tmp_path):
    mesh = tiny_mesh()
    mesh.valid[:] = False
    with pytest.raises(ValueError):
        export_mesh(mesh, tmp_path / "e.obj")
