import math

import mpmath
import numpy as np
import pytest

from gcflow.ode_core import (BlowupSignal, closed_form_special_solution, detect_blowup,
                             integrate_riemann_ode, integrate_toy_model, product_law, radicand,
                             riemann_rhs)
from gcflow.profiles import CurvatureProfile, Modulation

ONE = CurvatureProfile.constant(1.0)
LOG = CurvatureProfile.log_example()


def test_closed_form_recovers_initial_data():
    w, z = closed_form_special_solution(0.3, -0.7, 1.0, 0.0, 2.0, 2.0)
    assert (w, z) == pytest.approx((0.3, -0.7), abs=1e-15)


def test_closed_form_at_half():
    t = 0.5
    w, z = closed_form_special_solution(1.0, -1.0, math.cosh(t), math.sinh(t), 1.0, 1.0)
    exact = float(1 / mpmath.sqrt(1 - mpmath.sinh(0.5) ** 2))
    assert w == pytest.approx(exact, rel=1e-14)
    assert w == pytest.approx(1.171648, abs=1e-6)
    assert z == -w
    tr = integrate_riemann_ode(1.0, -1.0, ONE, 0.5, 1e-4, output_times=[0.5])
    assert abs(tr.w[-1] - w) <= 1e-6


def test_closed_form_raises_past_blowup():
    t = 1.0
    with pytest.raises(BlowupSignal):
        closed_form_special_solution(1.0, -1.0, math.cosh(t), math.sinh(t), 1.0, 1.0)


def test_radicand_root_is_asinh_one():
    t = math.asinh(1.0)
    assert radicand(1.0, -1.0, math.cosh(t), math.sinh(t), 1.0) == pytest.approx(0.0, abs=1e-12)


def test_zero_is_an_equilibrium():
    tr = integrate_riemann_ode(0.0, 0.0, LOG, 50.0, 0.1)
    assert np.all(tr.w == 0) and np.all(tr.z == 0)
    assert not detect_blowup(0.0, 0.0, ONE, 10.0).blew_up


def test_asymmetric_closed_form_agrees_with_integration():
    w0, z0, k0 = 0.4, -0.1, 1.0
    tr = integrate_riemann_ode(w0, z0, ONE, 1.0, 1e-3)
    w, z = closed_form_special_solution(w0, z0, np.cosh(tr.t), np.sinh(tr.t), 1.0, k0)
    assert np.max(np.abs(tr.w - w)) < 1e-9
    assert np.max(np.abs(tr.z - z)) < 1e-9


def test_fourth_order_before_blowup():
    t_end = 0.7 * math.asinh(1.0)
    errs = []
    for dt in (0.04, 0.02, 0.01):
        tr = integrate_riemann_ode(1.0, -1.0, ONE, t_end, dt)
        w, _ = closed_form_special_solution(1.0, -1.0, math.cosh(t_end), math.sinh(t_end), 1, 1)
        errs.append(abs(tr.w[-1] - w))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 12), ratios


def test_symmetric_data_stay_symmetric():
    tr = integrate_riemann_ode(1e-2, -1e-2, LOG, 1000.0, 0.5)
    assert np.max(np.abs(tr.w + tr.z)) <= 1e-12
    assert not tr.blowup.blew_up
    ratio = tr.w / tr.k
    assert np.all(np.isfinite(ratio)) and ratio.max() / ratio.min() < 10


def test_asymmetric_decay_bands():
    tr = integrate_riemann_ode(1.1e-2, -0.9e-2, LOG, 1000.0, 0.5)
    s = (tr.w + tr.z) * tr.B ** 2
    d = (tr.w - tr.z) / tr.k
    assert np.max(np.abs(s)) < 10 * abs(s[0])
    assert d.max() / d.min() < 10


def test_product_law():
    tr = integrate_riemann_ode(0.5, -0.2, LOG, 20.0, 0.01)
    X = product_law(0.5, -0.2, tr.B, tr.B_t, tr.k, float(LOG.k(0.0, 0.0)))
    np.testing.assert_allclose(tr.w * tr.z, X, rtol=1e-8, atol=1e-10)


def test_explicit_metric_column_matches_internal_metric():
    a = integrate_riemann_ode(0.5, -0.5, ONE, 0.5, 1e-3)
    b = integrate_riemann_ode(0.5, -0.5, ONE, 0.5, 1e-3, metric_column=(np.cosh, np.sinh))
    np.testing.assert_allclose(a.w, b.w, rtol=1e-10)


def test_blowup_location_constant():
    rep = detect_blowup(1.0, -1.0, ONE, 3.0)
    assert rep.blew_up and rep.mechanism == "denominator_root"
    assert rep.t_star == pytest.approx(0.881374, abs=1e-6)


def test_no_blowup_for_log_example():
    assert not detect_blowup(1e-2, -1e-2, LOG, 1000.0, dt=0.5).blew_up


def test_blowup_report_fields_are_consistent():
    rep = detect_blowup(2.0, -2.0, CurvatureProfile.power(1.0, 0.25), 10.0)
    assert rep.blew_up
    assert 0 < rep.t_star < 10
    assert rep.as_dict()["mechanism"] in ("hyperbolicity_loss", "state_overflow")


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        integrate_riemann_ode(1, -1, ONE, 1.0, 0.0)
    with pytest.raises(ValueError):
        modulated = CurvatureProfile.log_example(modulation=Modulation("sine", 0.2))
        integrate_riemann_ode(1, -1, modulated, 1.0, 0.1)


def test_rhs_matches_hand_derivation():
    w, z, k, kt, B, Bt = 0.3, -0.2, 0.9, -0.1, 1.4, 0.5
    dw, dz = riemann_rhs(w, z, k, kt, B, Bt)
    a, b = Bt / B - kt / (2 * k), Bt / B + kt / (2 * k)
    assert dw == pytest.approx(-a * w - b * z - B * Bt * w * w * z)
    assert dz == pytest.approx(-a * z - b * w - B * Bt * w * z * z)


class TestToyModels:
    def test_scalar_constant_diverges(self):
        _, verdict = integrate_toy_model("scalar", 1.0, ONE, 20.0, 1e-2)
        assert not verdict["global"]
        assert verdict["t_star"] is not None and verdict["t_star"] < 20
        assert verdict["int_k"] == pytest.approx(20.0)

    def test_scalar_log_example_global(self):
        traj, verdict = integrate_toy_model("scalar", 0.05, LOG, 1000.0, 0.5)
        assert verdict["global"]
        assert verdict["sup_abs_w"] < 1
        assert verdict["int_k"] < 1 / math.log(2)
        assert np.all(traj.z == -traj.w)

    def test_full_zero(self):
        traj, verdict = integrate_toy_model("full", 0.0, LOG, 10.0, 0.1, z0=0.0)
        assert verdict["global"] and np.all(traj.w == 0) and np.all(traj.z == 0)

    def test_full_needs_z0(self):
        with pytest.raises(ValueError):
            integrate_toy_model("full", 0.1, LOG, 10.0, 0.1)
