"""Stage orchestration: hypotheses, ODE, PDE (small-data and tail), certificate, gluing, mesh."""
from __future__ import annotations

import dataclasses
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, io, kernels
from .certify import (MARGIN_HEADER, ControlEnvelope, EnvelopeRefused, control_envelope,
                      global_growth_constant, hong_monitor, monitor_bounds, threshold_plan)
from .config import STAGES, ExperimentConfig, dump_config
from .geometry import METRIC_HEADER, check_hypotheses, solve_gauss_equation
from .gluing import TRACE_HEADER, TRANSFORM_HEADER, boundary_time, run_gluing
from .hyperbolic import (SNAPSHOT_HEADER, ChartCoefficients, growth_constant, solve_cauchy)
from .immersion import MESH_CSV_HEADER, export_mesh, integrate_frame, second_fundamental_form, \
    verify_immersion
from .profiles import Modulation
from .ode_core import TRAJECTORY_HEADER, detect_blowup, integrate_riemann_ode

DEPENDS = {"certify": ("solve-pde",), "immerse": ("solve-pde",), "solve-pde": ("check",)}


@dataclass
class StageResult:
    status: str  # pass | violation | error | skipped
    seconds: float = 0.0
    results: dict = field(default_factory=dict)
    message: str = ""


@dataclass
class RunReport:
    config_text: str
    out_dir: str
    stages: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)

    @property
    def violation(self) -> bool:
        return any(s.status == "violation" for s in self.stages.values())

    @property
    def failed(self) -> bool:
        return any(s.status == "error" for s in self.stages.values())

    @property
    def certified(self) -> bool:
        c = self.stages.get("certify")
        return bool(c and c.status == "pass")

    def as_dict(self, timing: bool = True) -> dict:
        stages = {}
        for name, s in self.stages.items():
            d = {"status": s.status, "results": s.results, "message": s.message}
            if timing:
                d["seconds"] = round(s.seconds, 3)
            stages[name] = d
        return {"version": __version__, "backend": kernels.BACKEND, "certified": self.certified,
                "stages": stages, "manifest": self.manifest, "config": self.config_text}


class Pipeline:
    """Runs stages in canonical order, sharing intermediate products."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str):
        self.cfg = cfg
        self.out = out_dir
        self.profile = cfg.profile.build()
        self.report = RunReport(dump_config(cfg), out_dir)
        self.cache: dict = {}

    # helpers ----------------------------------------------------------
    def _path(self, name):
        return os.path.join(self.out, name)

    def _emit(self, path):
        self.report.manifest.append({"file": os.path.relpath(path, self.out),
                                     "sha256": io.sha256_file(path),
                                     "bytes": os.path.getsize(path)})

    def _csv(self, name, header, cols):
        self._emit(io.write_csv(self._path(name), header, cols))

    @property
    def scale(self):
        return self.cfg.run.resolution_scale

    # stages -----------------------------------------------------------
    def stage_check(self):
        c = self.cfg.certify
        t0 = 1.0 if c.t0 == "auto" else float(c.t0)
        rep = check_hypotheses(self.profile, t0, c.delta)
        self.cache["hyp"] = rep
        res = {"verdicts": rep.verdicts, "clauses": rep.clauses, "integral": rep.integral_sup,
               "kt_limit": rep.kt_limit, "t0_suggested": rep.t0_suggested}
        msg = "" if rep.verdicts["H1"] else "H1 fails: " + ", ".join(
            k for k, v in rep.clauses.items() if not v)
        return ("pass" if rep.verdicts["H1"] else "violation"), res, msg

    def stage_solve_ode(self):
        o = self.cfg.ode
        profile, note = self.profile, ""
        if not profile.x_independent and profile.kind != "custom":
            profile = dataclasses.replace(profile, modulation=Modulation())
            note = "modulation dropped for the x-independent reduction"
        rep = detect_blowup(o.w0, o.z0, profile, o.t_end, dt=o.dt)
        t_end = o.t_end if not rep.blew_up else rep.t_star
        n = max(1, int(round(t_end / o.dt)))
        times = np.linspace(0.0, t_end, n + 1)
        if rep.blew_up:
            times = times[times < rep.t_star - 1e-6]
        traj = integrate_riemann_ode(o.w0, o.z0, profile, float(times[-1]), o.dt,
                                     output_times=times)
        self._csv("trajectory.csv", TRAJECTORY_HEADER, traj.rows())
        res = {"blowup": rep.as_dict(), "t_star": rep.t_star, "w_end": float(traj.w[-1]),
               "z_end": float(traj.z[-1])}
        return ("violation" if rep.blew_up else "pass"), res, note

    def _grid(self):
        g = self.cfg.grid
        nx = max(4, int(round(g.nx * self.scale)))
        if g.periodic:
            xs = g.x_min + np.arange(nx) * (g.x_max - g.x_min) / nx
        else:
            xs = g.x_min + (np.arange(nx) + 0.5) * (g.x_max - g.x_min) / nx
        return xs, g.dt_max / self.scale

    def _omega1(self):
        """Small-data solve on Omega1 at R = omega1_R with the growth bound check."""
        c, g = self.cfg.certify, self.cfg.grid
        R, X = c.omega1_R, c.omega1_x
        T = float(boundary_time(R, X))
        dt = g.dt_max * 2 / self.scale
        dx = c.omega1_dx / self.scale
        reach = X + 2.5 * math.ceil(T / dt) * dx
        n = 2 * int(math.ceil(reach / dx))
        xs = (np.arange(n) + 0.5) * dx - n * dx / 2
        ts = np.linspace(0.0, T, int(round(T / (2 * dt))) + 1)
        metric = solve_gauss_equation(self.profile, xs, ts, dt_sub=g.metric_dt_sub)
        co = ChartCoefficients(self.profile, metric)
        region = (ts[:, None] <= boundary_time(R, xs)[None, :]) & (np.abs(xs)[None, :] <= X)
        H = global_growth_constant(co, ts, region)
        plan = threshold_plan(T, H, c.epsilon)
        res = {"R": R, "T": T, "H": H, "eta0": plan["eta0"], "log_eta0": plan["log_eta0"]}
        if plan["underflow"]:
            res["note"] = "eta0 underflows; Omega1 solution is the zero state"
            return res, True
        r0 = np.full_like(xs, plan["eta0"])
        F = solve_cauchy(r0, -r0, xs, co, (0.0, T), cfl_target=g.cfl, dt_max=dt,
                         snapshot_times=ts, periodic=False)
        Hh = growth_constant(F, co, region)
        mon = hong_monitor(F, Hh, plan["eta0"], region)
        res.update({"H_hat": Hh, "hong_passed": bool(mon["passed"]),
                    "hong_sup_ratio": mon["sup_ratio"], "steps": F.meta["steps"]})
        self._csv("omega1_field.csv", SNAPSHOT_HEADER, F.rows())
        return res, bool(mon["passed"])

    def _tail_setup(self):
        hyp = self.cache.get("hyp")
        c = self.cfg.certify
        regime = hyp is not None and hyp.verdicts["H1"]
        if c.t0 != "auto":
            t0 = float(c.t0)
        else:
            t0 = float(hyp.t0_suggested) if regime else 0.0
        return regime, t0

    def stage_solve_pde(self):
        c, g = self.cfg.certify, self.cfg.grid
        xs, dt_max = self._grid()
        regime, t0 = self._tail_setup()
        t_end = t0 + c.horizon
        mts = np.arange(0.0, t_end + 0.5 * g.metric_dt, g.metric_dt)
        metric = solve_gauss_equation(self.profile, xs, mts, dt_sub=g.metric_dt_sub,
                                      periodic_x=g.periodic)
        co = ChartCoefficients(self.profile, metric)
        self.cache.update(metric=metric, coeffs=co, xs=xs, t0=t0, regime=regime, dt_max=dt_max)
        res = {"t0": t0, "nx": len(xs), "regime": "tail" if regime else "ode_data"}
        ok = True
        if regime:
            o1, ok = self._omega1()
            res["omega1"] = o1
            r0 = np.full_like(xs, c.tail_level * c.epsilon)
            s0 = -r0
            source_frac = None
        else:
            k0 = self.profile.evaluate(xs, np.full_like(xs, t0), check=False).k
            r0, s0 = self.cfg.ode.w0 / k0, self.cfg.ode.z0 / k0
            source_frac = 0.01
        snaps = t0 + np.arange(0.0, c.horizon + 0.5 * c.snapshot_dt, c.snapshot_dt)
        F = solve_cauchy(r0, s0, xs, co, (t0, t_end), cfl_target=g.cfl, dt_max=dt_max,
                         snapshot_times=snaps, periodic=g.periodic, tilde=True,
                         source_frac=source_frac)
        self.cache["field"] = F
        self._csv("field.csv", SNAPSHOT_HEADER, F.rows())
        self._csv("metric.csv", METRIC_HEADER, _metric_rows(metric, snaps))
        res.update({"steps": F.meta["steps"], "completed": F.meta["completed"],
                    "first_loss": F.meta["first_loss"], "backend": F.meta["backend"]})
        status = "pass" if ok and bool(F.valid[-1].all()) else "violation"
        return status, res, ""

    def stage_certify(self):
        c = self.cfg.certify
        F, co = self.cache["field"], self.cache["coeffs"]
        try:
            if not self.cache["regime"]:
                raise EnvelopeRefused(math.inf)
            env = control_envelope(self.profile, c.epsilon, self.cfg.mu, self.cache["t0"],
                                   F.xs, F.ts)
        except EnvelopeRefused:
            env = ControlEnvelope.unbounded(F.xs, F.ts, c.epsilon, self.cfg.mu, self.cache["t0"])
        rep = monitor_bounds(F, env, co)
        self.cache["certificate"] = rep
        self._csv("margins.csv", MARGIN_HEADER, rep.margins.T)
        res = rep.summary()
        res["envelope_refused"] = env.refused
        return ("pass" if rep.certified else "violation"), res, ""

    def stage_glue(self):
        gl, c = self.cfg.gluing, self.cfg.certify
        g = run_gluing(self.profile, gl.R, c.epsilon, self.cfg.mu, x_trace=gl.x_trace,
                       n_trace=int(round(gl.n_trace * self.scale)), x_grid=gl.x_grid,
                       dx=gl.dx / self.scale)
        if gl.sigma != "auto-bisect" and g.omega1_solution != "exact_zero":
            g.notes.append("fixed sigma requested; bisection result reported")
        tf = g.transform
        self._csv("transform.csv", TRANSFORM_HEADER, tf.rows())
        self._csv("traces.csv", TRACE_HEADER, g.trace.rows())
        return ("pass" if g.passed else "violation"), g.summary(), ""

    def stage_immerse(self):
        im = self.cfg.immersion
        co, t0, xs = self.cache["coeffs"], self.cache["t0"], self.cache["xs"]
        F0 = self.cache["field"]
        valid_t = F0.ts[F0.valid.all(axis=1)]
        t_hi = min(t0 + im.window, float(valid_t[-1]) if len(valid_t) else t0)
        if t_hi <= t0:
            return "violation", {"note": "no valid window for the mesh"}, ""
        snaps = np.arange(t0, t_hi + 1e-9, im.snapshot_dt / self.scale)
        r0, s0 = F0.r[0], F0.s[0]
        F = solve_cauchy(r0, s0, xs, co, (t0, float(snaps[-1])), cfl_target=self.cfg.grid.cfl,
                         dt_max=self.cache["dt_max"], snapshot_times=snaps,
                         periodic=self.cfg.grid.periodic,
                         source_frac=None if self.cache["regime"] else 0.01)
        sff = second_fundamental_form(F, self.cache["metric"], self.profile, coeffs=co)
        mesh = integrate_frame(sff)
        rep = verify_immersion(mesh, None, self.profile)
        rep["det_identity"] = float(np.nanmax(np.abs(sff.det_residual) / (sff.k * sff.B) ** 2))
        rep["gauge"] = mesh.meta["gauge"]
        path = self._path("mesh." + im.format)
        self._emit(export_mesh(mesh, path, im.format))
        if im.format != "csv":
            self._emit(export_mesh(mesh, self._path("mesh.csv"), "csv"))
        ok = rep["first_form"]["sup"] < 1e-2 and rep["valid_fraction"] > 0
        return ("pass" if ok else "violation"), rep, ""

    # driver -----------------------------------------------------------
    def run(self, stages) -> RunReport:
        wanted = set(stages)
        for s in list(wanted):
            for d in DEPENDS.get(s, ()):
                wanted.add(d)
                wanted.update(DEPENDS.get(d, ()))
        os.makedirs(self.out, exist_ok=True)
        halted = False
        for name in STAGES:
            if name not in wanted:
                continue
            if halted:
                self.report.stages[name] = StageResult("skipped", message="upstream error")
                continue
            fn = getattr(self, "stage_" + name.replace("-", "_"))
            t = time.perf_counter()
            try:
                status, res, msg = fn()
            except Exception as exc:  # stage failure halts downstream stages
                status, res, msg = "error", {}, f"{type(exc).__name__}: {exc}"
                halted = True
            self.report.stages[name] = StageResult(status, time.perf_counter() - t, res, msg)
        path = self._path("report.json")
        io.write_json(path, self.report.as_dict())
        return self.report


def _metric_rows(metric, ts):
    """Metric CSV rows restricted to the snapshot times."""
    d = metric.log_diag
    idx = np.unique(np.clip(np.searchsorted(metric.ts, ts - 1e-9), 0, len(metric.ts) - 1))
    T, X = np.meshgrid(metric.ts[idx], metric.xs, indexing="ij")
    cols = [X, T, metric.B[idx], metric.B_t[idx], d["dx_lnB"][idx], d["dxx_lnB"][idx],
            d["BdxdtlnB"][idx]]
    return [c.ravel() for c in cols]


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None,
                   stages=None) -> RunReport:
    """Run the selected stages (default: those in the config) and write report.json."""
    out = out_dir or cfg.run.out
    return Pipeline(cfg, out).run(stages or cfg.run.stages)
