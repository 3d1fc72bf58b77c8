import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from gcflow.geometry import (check_hypotheses, solve_gauss_equation, solve_polar_gauss,
                             tail_integral, tail_time_grid, verify_metric_asymptotics)
from gcflow.profiles import CurvatureProfile, DomainError, Modulation, eval_curvature


def log_k(t):
    return 1 / ((t + 2) * np.log(t + 2) ** 2)


class TestCurvature:
    def test_constant_profile(self):
        c = eval_curvature(CurvatureProfile.constant(1.0), 0.3, 7.0)
        assert (c.k, c.k_t, c.K) == (1.0, 0.0, -1.0)

    def test_log_example_at_origin(self):
        c = eval_curvature(CurvatureProfile.log_example(), 0.0, 0.0)
        exact = 1 / (2 * mpmath.log(2) ** 2)
        assert float(c.k) == pytest.approx(float(exact), rel=1e-15)
        assert float(c.k) == pytest.approx(1.0407, abs=1e-4)
        assert float(c.K) == pytest.approx(-float(exact) ** 2, rel=1e-14)

    def test_power_at_origin(self):
        c = eval_curvature(CurvatureProfile.power(1.0, 0.25), 0.0, 0.0)
        assert float(c.k) == 1.0
        assert float(c.k_t) == pytest.approx(-1.25)

    @pytest.mark.parametrize("kind", ["log_example", "power", "efimov"])
    @pytest.mark.parametrize("mod", [Modulation("sine", 0.3, 2.0), Modulation("bump", 0.5, 1, 0.7)])
    def test_partials_match_high_precision_derivatives(self, kind, mod):
        p = CurvatureProfile(kind, {}, mod)
        x0, t0 = 0.4, 3.0

        def k(x, t):
            return _mp_k(kind, mod, x, t)

        c = p.evaluate(x0, t0)
        assert float(c.k_t) == pytest.approx(float(mpmath.diff(lambda t: k(x0, t), t0)), rel=1e-9)
        assert float(c.k_x) == pytest.approx(float(mpmath.diff(lambda x: k(x, t0), x0)), rel=1e-9)
        assert float(c.k_xx) == pytest.approx(float(mpmath.diff(lambda x: k(x, t0), x0, 2)),
                                              rel=1e-8)
        assert float(c.k_xt) == pytest.approx(
            float(mpmath.diff(lambda x, t: k(x, t), (x0, t0), (1, 1))), rel=1e-8)

    def test_domain_violation(self):
        with pytest.raises(DomainError):
            eval_curvature(CurvatureProfile.log_example(), 0.0, -1.5)

    def test_custom_profile_matches_builtin(self):
        cust = CurvatureProfile.custom("1/((t+2)*log(t+2)**2)")
        ref = CurvatureProfile.log_example()
        a, b = cust.evaluate(0.1, 4.0), ref.evaluate(0.1, 4.0)
        assert float(a.k) == pytest.approx(float(b.k), rel=1e-14)
        assert float(a.k_t) == pytest.approx(float(b.k_t), rel=1e-6)

    def test_custom_rejects_unknown_names(self):
        with pytest.raises(ValueError):
            CurvatureProfile.custom("__import__('os')")

    def test_bad_modulation(self):
        with pytest.raises(ValueError):
            Modulation("sine", 1.5)


def _mp_k(kind, mod, x, t):
    if kind == "log_example":
        kb = 1 / ((t + 2) * mpmath.log(t + 2) ** 2)
    elif kind == "power":
        kb = (1 + t) ** (-1.25)
    else:
        kb = 1 / (1 + t)
    if mod.kind == "sine":
        m = 1 + mod.amplitude * mpmath.sin(mod.wavenumber * x)
    else:
        m = 1 + mod.amplitude * mpmath.exp(-x * x / mod.width ** 2)
    return m * kb


class TestGaussEquation:
    def test_constant_curvature_is_cosh(self):
        ts = np.linspace(0, 2, 21)
        m = solve_gauss_equation(CurvatureProfile.constant(1.0), np.array([0.0, 1.0]), ts)
        assert m.B[10, 0] == pytest.approx(1.5430806, abs=1e-7)
        np.testing.assert_allclose(m.B[:, 0], np.cosh(ts), rtol=1e-8)
        np.testing.assert_allclose(m.B_t[:, 1], np.sinh(ts), rtol=1e-8, atol=1e-12)

    def test_initial_condition(self):
        m = solve_gauss_equation(CurvatureProfile.log_example(modulation=Modulation("sine", 0.2)),
                                 np.linspace(0, 6, 7), np.linspace(0, 5, 11))
        assert np.all(m.B[0] == 1.0) and np.all(m.B_t[0] == 0.0)
        assert np.all(np.diff(m.B_t, axis=0) >= 0)
        assert np.all(m.B > 0)

    def test_fourth_order_in_substep(self):
        ts = np.linspace(0, 3, 4)
        errs = []
        for h in (0.2, 0.1, 0.05):
            m = solve_gauss_equation(CurvatureProfile.constant(1.3), np.array([0.0]), ts, dt_sub=h)
            errs.append(np.max(np.abs(m.B[:, 0] - np.cosh(1.3 * ts))))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(ratios > 12), ratios

    def test_log_example_slope_band(self):
        p = CurvatureProfile.log_example()
        T = 1e4
        m = solve_gauss_equation(p, np.array([0.0]), tail_time_grid(T, 0.05, 0.01),
                                 dt_sub=0.01, growth=0.002)
        k2 = integrate.quad(lambda t: log_k(t) ** 2, 0, np.inf, limit=400)[0]
        tk2 = integrate.quad(lambda t: t * log_k(t) ** 2, 0, np.inf, limit=400)[0]
        lower_T = integrate.quad(lambda t: log_k(t) ** 2, 0, T, limit=400)[0]
        bt = m.B_t[-1, 0]
        assert lower_T <= bt <= math.exp(tk2) * k2
        # B_t is nondecreasing, so its limit lies in the same band
        assert k2 <= math.exp(tk2) * k2

    def test_x_derivatives_vanish_without_modulation(self):
        m = solve_gauss_equation(CurvatureProfile.log_example(), np.linspace(0, 1, 5),
                                 np.linspace(0, 10, 11))
        for v in m.log_diag.values():
            assert np.all(np.isfinite(v))
        assert np.max(np.abs(m.log_diag["dx_lnB"])) == 0.0

    def test_variational_x_derivative_matches_differences(self):
        p = CurvatureProfile.log_example(modulation=Modulation("sine", 0.2))
        xs = np.arange(256) * 2 * np.pi / 256
        m = solve_gauss_equation(p, xs, np.linspace(0, 20, 21), periodic_x=True)
        fd = m.fd_log_diag()
        exact = m.log_diag
        assert np.max(np.abs(fd["dx_lnB"] - exact["dx_lnB"])[:, 2:-2]) < 1e-3

    def test_overflow_truncates_column(self):
        m = solve_gauss_equation(CurvatureProfile.constant(5.0), np.array([0.0]),
                                 np.linspace(0, 200, 201))
        assert m.valid_count[0] < 201
        assert m.t_valid_max < 200

    def test_rejects_nonzero_start(self):
        with pytest.raises(ValueError):
            solve_gauss_equation(CurvatureProfile.constant(1.0), np.array([0.0]), [1.0, 2.0])


class TestAsymptotics:
    def test_constant_curvature_flags_violation(self):
        m = solve_gauss_equation(CurvatureProfile.constant(1.0), np.array([0.0]),
                                 np.linspace(0, 40, 401))
        rep = verify_metric_asymptotics(m, CurvatureProfile.constant(1.0),
                                        sample_ts=[5, 10, 20, 40])
        assert not rep.decreasing
        assert not rep.final_ok
        assert rep.e[-1] == pytest.approx(40 * math.tanh(40) - 1, rel=1e-6)

    def test_linear_growth_constants(self):
        p = CurvatureProfile.log_example()
        m = solve_gauss_equation(p, np.array([0.0]), tail_time_grid(1e4, 0.05, 0.01),
                                 dt_sub=0.01, growth=0.002)
        rep = verify_metric_asymptotics(m, p)
        assert 0 < rep.C1 <= rep.C2 < np.inf
        assert all(v == 0.0 for v in rep.diag_sup.values())


class TestPolar:
    def test_flat_limit(self):
        rhos = np.linspace(0, 5, 51)
        pol = solve_polar_gauss(CurvatureProfile.flat(), [0.0], rhos)
        np.testing.assert_allclose(pol.G[:, 0], rhos, atol=1e-13)
        assert pol.b0 == 1.0

    def test_constant_is_sinh(self):
        rhos = np.linspace(0, 2, 21)
        pol = solve_polar_gauss(CurvatureProfile.constant(1.0), [0.0, 1.0], rhos)
        assert pol.G[10, 0] == pytest.approx(1.1752012, abs=1e-7)
        np.testing.assert_allclose(pol.G_rho[:, 1], np.cosh(rhos), rtol=1e-9)
        assert pol.b0 == math.inf

    def test_log_example_bounds(self, log_polar):
        pol = log_polar
        sel = pol.rhos <= 1e3
        Gr, G, rho = pol.G_rho[sel, 0], pol.G[sel, 0], pol.rhos[sel]
        assert pol.b0 >= 1
        assert np.all(Gr >= 1 - 1e-12) and np.all(Gr <= pol.b0)
        assert np.all(rho <= G * (1 + 1e-12)) and np.all(G <= pol.b0 * rho + 1e-12)
        # b0 = exp(int rho k^2); oracle integrates in v = ln(rho + 2), where the
        # 1/(rho ln^4 rho) tail becomes a plain v^-4
        f = lambda r: r / ((r + 2) * mpmath.log(r + 2) ** 2) ** 2
        moment = float(mpmath.quad(lambda v: f(mpmath.exp(v) - 2) * mpmath.exp(v),
                                   [mpmath.log(2), 5, mpmath.inf]))
        assert moment == pytest.approx(0.2326693377064700, rel=1e-14)
        assert pol.b0 == pytest.approx(math.exp(moment), rel=2e-7)

    def test_rhos_must_start_at_zero(self):
        with pytest.raises(ValueError):
            solve_polar_gauss(CurvatureProfile.flat(), [0.0], [0.5, 1.0])


class TestHypotheses:
    def test_log_example_integral(self):
        v, method = tail_integral(CurvatureProfile.log_example(), 0.0)
        assert method == "closed_form"
        assert v == pytest.approx(1 / math.log(2), abs=1e-12)

    def test_log_example_passes(self):
        rep = check_hypotheses(CurvatureProfile.log_example(), 1.0, 0.45)
        assert rep.passed and rep.verdicts["H1"]
        assert all(rep.clauses.values())
        assert rep.t0_suggested > 0

    def test_efimov_fails_kt(self):
        rep = check_hypotheses(CurvatureProfile.efimov(), 1.0, 0.45)
        assert not rep.verdicts["H1"]
        assert rep.kt_limit == pytest.approx(1.0, abs=1e-3)

    def test_power_profile(self):
        p = CurvatureProfile.power(1.0, 0.25)
        assert tail_integral(p, 0.0)[0] == pytest.approx(4.0)
        # d/dt ln(k t^{1.25}) = 1.25 (1/t - 1/(1+t)) > 0: the monotone clause holds at
        # the profile's own exponent and fails for a smaller one
        assert check_hypotheses(p, 1.0, 0.25).monotone_ok
        assert not check_hypotheses(p, 1.0, 0.1).monotone_ok

    def test_custom_tail_diverges_for_slow_decay(self):
        rep = check_hypotheses(CurvatureProfile.custom("1/(1+t)"), 1.0, 0.25)
        assert not rep.clauses["integral"]

    def test_custom_tail_converges(self):
        v, method = tail_integral(CurvatureProfile.custom("(1+t)**-2"), 0.0)
        assert v == pytest.approx(1.0, rel=1e-3)
