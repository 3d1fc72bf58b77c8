"""Experiment configuration: sectioned key = value text with a canonical form.

Every key has a type and a default.  ``dump_config`` writes all sections and
keys in schema order with normalized values, so ``dump(load(dump(c)))`` is
byte-identical to ``dump(c)``.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields

from .profiles import CurvatureProfile, Modulation

STAGES = ("check", "solve-ode", "solve-pde", "certify", "glue", "immerse")


class ConfigError(ValueError):
    """Config problem with optional line and field context."""

    def __init__(self, message: str, line: int | None = None, section: str | None = None,
                 key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line, self.section, self.key = line, section, key


@dataclass
class ProfileSection:
    kind: str = "log_example"
    k0: float = 1.0
    c: float = 1.0
    delta: float = 0.25
    expression: str = ""
    modulation: str = "none"
    amplitude: float = 0.0
    wavenumber: float = 1.0
    width: float = 1.0

    def build(self) -> CurvatureProfile:
        mod = Modulation(self.modulation, self.amplitude, self.wavenumber, self.width)
        if self.kind == "constant":
            return CurvatureProfile.constant(self.k0, modulation=mod)
        if self.kind == "power":
            return CurvatureProfile.power(self.c, self.delta, modulation=mod)
        if self.kind == "custom":
            return CurvatureProfile.custom(self.expression)
        return CurvatureProfile(self.kind, {}, mod)


@dataclass
class GridSection:
    x_min: float = 0.0
    x_max: float = 2 * math.pi
    nx: int = 64
    periodic: bool = True
    cfl: float = 0.4
    dt_max: float = 0.05
    metric_dt: float = 0.1
    metric_dt_sub: float = 0.02


@dataclass
class OdeSection:
    w0: float = 1.0
    z0: float = -1.0
    t_end: float = 1.0
    dt: float = 1e-3


@dataclass
class CertifySection:
    epsilon: float = 0.01
    mu: float | str = "auto"
    t0: float | str = "auto"
    delta: float = 0.45
    horizon: float = 200.0
    snapshot_dt: float = 1.0
    tail_level: float = 0.75
    omega1_R: float = 1.0
    omega1_x: float = 2.0
    omega1_dx: float = 0.05


@dataclass
class GluingSection:
    R: float = 20000.0
    sigma: float | str = "auto-bisect"
    x_trace: float = 4.0
    n_trace: int = 160
    x_grid: float = 6.0
    dx: float = 0.05


@dataclass
class ImmersionSection:
    window: float = 10.0
    snapshot_dt: float = 0.25
    format: str = "obj"


@dataclass
class RunSection:
    stages: tuple = STAGES
    out: str = "gcflow_out"
    resolution_scale: float = 1.0


@dataclass
class ExperimentConfig:
    profile: ProfileSection = field(default_factory=ProfileSection)
    grid: GridSection = field(default_factory=GridSection)
    ode: OdeSection = field(default_factory=OdeSection)
    certify: CertifySection = field(default_factory=CertifySection)
    gluing: GluingSection = field(default_factory=GluingSection)
    immersion: ImmersionSection = field(default_factory=ImmersionSection)
    run: RunSection = field(default_factory=RunSection)

    @property
    def mu(self) -> float:
        m = self.certify.mu
        return math.sqrt(self.certify.epsilon) if m == "auto" else float(m)


SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)}
CHOICES = {
    ("profile", "kind"): ("constant", "power", "log_example", "efimov", "custom"),
    ("profile", "modulation"): ("none", "sine", "bump"),
    ("immersion", "format"): ("obj", "ply", "csv"),
}
AUTO = {("certify", "mu"): "auto", ("certify", "t0"): "auto", ("gluing", "sigma"): "auto-bisect"}


def _parse_value(section, key, default, raw: str, line):
    raw = raw.strip()
    if (section, key) in AUTO and raw == AUTO[(section, key)]:
        return raw
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or (section, key) in AUTO:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError(f"expected a finite number, got {raw!r}")
            return v
        if isinstance(default, tuple):
            items = tuple(s.strip() for s in raw.split(",") if s.strip())
            bad = [s for s in items if s not in STAGES]
            if bad:
                raise ValueError(f"unknown stage(s) {', '.join(bad)}")
            return items
    except ValueError as exc:
        msg = str(exc)
        if "invalid literal" in msg or "could not convert" in msg:
            msg = f"expected {type(default).__name__}, got {raw!r}"
        raise ConfigError(msg, line, section, key) from None
    choices = CHOICES.get((section, key))
    if choices and raw not in choices:
        raise ConfigError(f"expected one of {', '.join(choices)}, got {raw!r}", line, section, key)
    return raw


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, for error context."""
    out, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = n
        elif section and s and s[0] not in "#;":
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            out.setdefault((section, key), n)
    return out


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno, exc.section,
                          exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section {exc.section!r}", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", lineno) from None
    lines = _key_lines(text)
    cfg = ExperimentConfig()
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
        obj = getattr(cfg, section)
        known = {f.name: f for f in fields(obj)}
        for key, raw in cp.items(section):
            if key not in known:
                raise ConfigError("unknown key", lines.get((section, key)), section, key)
            default = getattr(type(obj)(), key)
            setattr(obj, key, _parse_value(section, key, default, raw, lines.get((section, key))))
    validate(cfg, lines)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def validate(cfg: ExperimentConfig, lines: dict | None = None):
    lines = lines or {}

    def need(cond, section, key, msg):
        if not cond:
            raise ConfigError(msg, lines.get((section, key)), section, key)
    g, c = cfg.grid, cfg.certify
    need(g.nx >= 4, "grid", "nx", "need at least 4 cells")
    need(g.x_max > g.x_min, "grid", "x_max", "must exceed x_min")
    need(0 < g.cfl <= 1, "grid", "cfl", "must lie in (0, 1]")
    need(g.dt_max > 0, "grid", "dt_max", "must be positive")
    need(0 < c.epsilon < 1, "certify", "epsilon", "must lie in (0, 1)")
    need(c.mu == "auto" or c.mu > 0, "certify", "mu", "must be positive or auto")
    need(c.t0 == "auto" or c.t0 >= 0, "certify", "t0", "must be nonnegative or auto")
    need(cfg.ode.dt > 0, "ode", "dt", "must be positive")
    need(cfg.gluing.R > 0, "gluing", "R", "must be positive")
    need(cfg.run.resolution_scale > 0, "run", "resolution_scale", "must be positive")
    if cfg.profile.kind == "custom":
        need(bool(cfg.profile.expression), "profile", "expression", "custom profile needs it")
    try:
        cfg.profile.build()
    except ValueError as exc:
        raise ConfigError(str(exc), lines.get(("profile", None)), "profile") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text: every section and key in schema order."""
    out = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        out.append(f"[{section}]")
        for f in fields(obj):
            out.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)
