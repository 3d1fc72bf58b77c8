import math
import time

import numpy as np
import pytest

from gcflow.certify import control_envelope, monitor_bounds
from gcflow.geometry import check_hypotheses, solve_gauss_equation
from gcflow.hyperbolic import ChartCoefficients, solve_cauchy
from gcflow.profiles import CurvatureProfile, Modulation

EPSILON, MU, HORIZON = 0.01, 0.1, 200.0

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA[n] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")


def modulated_log_example():
    return CurvatureProfile.log_example(modulation=Modulation("sine", 0.2, 1.0))


def certified_tail_run(nx: int, horizon: float = HORIZON):
    """Tail solve of the certified regime on a periodic grid of nx cells."""
    start = time.perf_counter()
    p = modulated_log_example()
    t0 = check_hypotheses(p, 1.0, 0.45).t0_suggested
    xs = np.arange(nx) * 2 * np.pi / nx
    metric = solve_gauss_equation(p, xs, np.arange(0.0, t0 + horizon + 1e-4, 0.1),
                                  dt_sub=0.02, periodic_x=True)
    co = ChartCoefficients(p, metric)
    snaps = t0 + np.arange(0.0, horizon + 0.01, 1.0)
    F = solve_cauchy(0.75 * EPSILON, -0.75 * EPSILON, xs, co, (t0, t0 + horizon),
                     dt_max=0.05 * 64 / nx, snapshot_times=snaps, tilde=True)
    env = control_envelope(p, EPSILON, MU, t0, xs, snaps)
    rep = monitor_bounds(F, env, co)
    return {"profile": p, "t0": t0, "metric": metric, "coeffs": co, "field": F,
            "env": env, "report": rep, "seconds": time.perf_counter() - start}


@pytest.fixture(scope="session")
def certified_pair():
    return certified_tail_run(64), certified_tail_run(128)


@pytest.fixture(scope="session")
def modulated_gluing():
    from gcflow.gluing import run_gluing
    return run_gluing(modulated_log_example(), 20000.0, EPSILON, MU)


@pytest.fixture(scope="session")
def log_polar():
    from gcflow.geometry import solve_polar_gauss, tail_time_grid
    return solve_polar_gauss(CurvatureProfile.log_example(), [0.0],
                             tail_time_grid(9e4, 0.05, 0.01), dt_sub=0.01, growth=0.002)


def rel_change(a, b):
    return abs(a - b) / max(abs(a), abs(b), math.ulp(1.0))
