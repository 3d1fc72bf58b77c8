import math

import numpy as np
import pytest

from gcflow.geometry import solve_polar_gauss
from gcflow.gluing import (PolarTrace, bisect_sigma, boundary_slope, boundary_time,
                           boundary_trace_check, build_domains, construct_initial_eta,
                           coordinate_transform, jacobian_consistency, pushforward_invariants,
                           smooth_ramp)
from gcflow.hyperbolic import Coefficients, GridCoefficients
from gcflow.profiles import CurvatureProfile

FLAT_POLAR = solve_polar_gauss(CurvatureProfile.flat(), [0.0], np.linspace(0, 20, 401))
XS = (np.arange(40) + 0.5) * 0.2 - 4.0


@pytest.fixture(scope="module")
def flat_transform():
    return coordinate_transform(FLAT_POLAR, XS, np.linspace(0, 5, 26), step_frac=0.005)


class TestTransform:
    def test_initial_values(self, flat_transform):
        tf = flat_transform
        np.testing.assert_array_equal(tf.rho[0], np.abs(XS))
        np.testing.assert_array_equal(tf.theta[0], np.where(XS > 0, 0.0, math.pi))
        assert np.all(tf.Phi[0] == 0)
        assert np.all(tf.xi == -np.sign(XS))

    def test_flat_jacobian_closed_form(self, flat_transform):
        tf = flat_transform
        T, X = np.meshgrid(tf.ts, tf.xs, indexing="ij")
        rho = np.hypot(X, T)
        J = tf.jacobian
        np.testing.assert_allclose(J["rho_x"], X / rho, atol=1e-7)
        np.testing.assert_allclose(J["rho_t"], T / rho, atol=1e-7)
        # the determinant theta_x rho_t - theta_t rho_x equals B / G
        det = J["theta_x"] * J["rho_t"] - J["theta_t"] * J["rho_x"]
        np.testing.assert_allclose(det, tf.B / tf.G, rtol=1e-12)

    def test_sandwich_and_consistency(self, flat_transform):
        assert all(v == 1.0 for v in flat_transform.sandwich().values())
        jc = jacobian_consistency(flat_transform)
        assert jc["sign_agreement"] == 1.0
        assert jc["max_abs_diff"] < 0.05

    def test_rejects_axis_column(self):
        with pytest.raises(ValueError):
            coordinate_transform(FLAT_POLAR, [0.0, 1.0], [0.0, 1.0])
        with pytest.raises(ValueError):
            coordinate_transform(FLAT_POLAR, [1.0], [0.5, 1.0])


class TestPushforward:
    def test_equal_invariants_map_to_equal(self, flat_transform):
        J = flat_transform.jacobian
        r = np.full(J["rho_t"].shape, 0.3)
        tr = pushforward_invariants(r, r, J, 1.0, 1.0, flat_transform.B, flat_transform.G)
        ok = ~tr.excluded
        np.testing.assert_allclose(tr.rbar[ok], tr.sbar[ok], rtol=0, atol=0)

    def test_identity_transform(self):
        J = {"rho_t": np.ones(5), "rho_x": np.zeros(5), "theta_t": np.zeros(5),
             "theta_x": np.ones(5)}
        r = np.linspace(0.1, 0.5, 5)
        tr = pushforward_invariants(r, -r, J, 2.0, 2.0, 1.0, 1.0)
        np.testing.assert_allclose(tr.rbar, r)
        np.testing.assert_allclose(tr.sbar, -r)

    def test_separation_routes_agree(self, flat_transform):
        rng = np.random.default_rng(0)
        tf = flat_transform
        J = {k: v[1:] for k, v in tf.jacobian.items()}
        r = rng.uniform(0, 0.05, J["rho_t"].shape)
        s = -rng.uniform(0, 0.05, J["rho_t"].shape)
        tr = pushforward_invariants(r, s, J, 0.7, 0.9, tf.B[1:], tf.G[1:])
        diff = tr.rbar - tr.sbar
        np.testing.assert_allclose(diff, tr.gap_identity, rtol=1e-9, atol=1e-13)

    def test_zero_trace_fails_separation_only(self):
        z = np.zeros(9)
        trace = PolarTrace(z, z + 1, np.linspace(0, 1, 9), z + 1, z, z, z, z.astype(bool))
        chk = boundary_trace_check(trace, 0.01, 0.1)
        assert chk["magnitude_ok"] and chk["derivative_ok"]
        assert not chk["separation_ok"]
        assert chk["excluded"] == 0


class TestDomains:
    def test_boundary_curve(self):
        om1, om2 = build_domains(1.0, [0.0, 2.0])
        np.testing.assert_array_equal(om1.boundary, [1.0, 5.0])
        assert om1.contains(2.0, 5.0) and not om2.contains(2.0, 5.0)
        assert om2.contains(0.0, 1.5)
        assert boundary_time(3.0, 1.0) == 6.0
        with pytest.raises(ValueError):
            build_domains(0.0, [0.0])

    def test_boundary_slope_peak(self):
        xs = np.linspace(0, 10, 100001)
        slope = boundary_slope(xs)
        i = np.argmax(slope)
        assert xs[i] == pytest.approx(math.sqrt(2), abs=1e-3)
        assert slope[i] == pytest.approx(math.sqrt(2) / 2, abs=1e-9)


def small_curvature_coeffs(R, xs):
    ts = np.linspace(0, float(boundary_time(R, np.abs(xs).max())), 21)
    shape = (len(ts), len(xs))
    fields = {name: np.zeros(shape) for name in Coefficients._fields}
    fields["k"] = np.full(shape, 0.1)
    fields["B"] = np.ones(shape)
    return GridCoefficients(xs, ts, fields)


class TestEta:
    R = 0.1

    def test_eta_properties(self):
        xs = np.linspace(-3, 3, 61)
        eta = construct_initial_eta(1.0, self.R, small_curvature_coeffs(self.R, xs), xs)
        np.testing.assert_allclose(eta.log_eta, eta.log_eta[::-1], rtol=1e-14)
        half = eta.log_eta[30:]
        assert np.all(np.diff(half) <= 0)
        assert np.all(np.isfinite(eta.log_eta)) and eta.eta.max() > 0
        assert np.all(eta.h2 >= 1 + eta.h1)
        assert np.all(np.diff(eta.h1) >= 0)
        r0, s0 = eta.initial_data()
        np.testing.assert_array_equal(r0, -s0)

    def test_zero_sigma(self):
        xs = np.linspace(-1, 1, 11)
        eta = construct_initial_eta(0.0, self.R, small_curvature_coeffs(self.R, xs), xs)
        r0, s0 = eta.initial_data()
        assert np.all(r0 == 0) and np.all(s0 == 0)
        with pytest.raises(ValueError):
            construct_initial_eta(-1.0, self.R, small_curvature_coeffs(self.R, xs), xs)

    def test_large_radius_stays_finite_in_log_space(self):
        xs = np.linspace(-2, 2, 21)
        eta = construct_initial_eta(1.0, 1e4, small_curvature_coeffs(1e4, xs), xs)
        assert np.all(eta.eta == 0.0)
        assert np.all(np.isfinite(eta.log_eta))


class TestHelpers:
    def test_smooth_ramp(self):
        z = np.linspace(-1, 2, 3001)
        u = smooth_ramp(z)
        assert np.all(u[z <= 0.25] == 0) and np.all(u[z >= 1] == 1)
        assert np.all(np.diff(u) >= 0)
        assert smooth_ramp(0.625) == pytest.approx(0.5)

    def test_bisect_sigma(self):
        assert bisect_sigma(lambda s: True) == 1.0
        found = bisect_sigma(lambda s: s <= 0.3)
        assert 0.3 - 2 ** -12 <= found <= 0.3
        assert bisect_sigma(lambda s: False) == 0.0


def test_modulated_gluing_mode(modulated_gluing):
    res = modulated_gluing
    assert res.omega1_solution == "exact_zero"
    assert res.check["excluded"] == 0
    assert np.all(np.isfinite(res.eta.log_eta))
    assert res.summary()["passed"] == res.passed
