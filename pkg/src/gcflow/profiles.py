"""Curvature profiles k(x, t) > 0 with analytic partials.

Every profile is separable, k(x, t) = m(x) * kb(t), where ``kb`` is one of a
handful of closed forms and ``m`` is an optional bounded modulation.  A
``custom`` kind evaluates a numpy expression and falls back to finite
differences for the partials.

The same type is reused for polar charts, with ``x`` playing the angle and
``t`` the radial distance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

KINDS = ("constant", "power", "log_example", "efimov", "custom")
MODULATIONS = ("none", "sine", "bump")


class DomainError(ValueError):
    """Raised when a profile is evaluated outside its domain."""


class CurvatureSample(NamedTuple):
    k: np.ndarray
    k_t: np.ndarray
    k_x: np.ndarray
    k_xx: np.ndarray
    k_xt: np.ndarray
    K: np.ndarray


@dataclass(frozen=True)
class Modulation:
    """Bounded smooth factor m(x) with two derivatives.

    ``sine``: m = 1 + a sin(q x), needs |a| < 1.
    ``bump``: m = 1 + a exp(-x^2 / w^2), needs a > -1.
    """

    kind: str = "none"
    amplitude: float = 0.0
    wavenumber: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in MODULATIONS:
            raise ValueError(f"unknown modulation {self.kind!r}")
        if self.kind == "sine" and not abs(self.amplitude) < 1:
            raise ValueError("sine modulation needs |amplitude| < 1")
        if self.kind == "bump" and not self.amplitude > -1:
            raise ValueError("bump modulation needs amplitude > -1")

    @property
    def trivial(self) -> bool:
        return self.kind == "none" or self.amplitude == 0.0

    def values(self, x):
        """Return (m, m', m'') at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.trivial:
            one = np.ones_like(x)
            return one, np.zeros_like(x), np.zeros_like(x)
        a = self.amplitude
        if self.kind == "sine":
            q = self.wavenumber
            sn, cs = np.sin(q * x), np.cos(q * x)
            return 1 + a * sn, a * q * cs, -a * q * q * sn
        w2 = self.width ** 2
        e = np.exp(-x * x / w2)
        return 1 + a * e, -2 * a * x / w2 * e, a * e * (4 * x * x / w2 - 2) / w2

    @property
    def sup(self) -> float:
        return 1.0 + abs(self.amplitude) if not self.trivial else 1.0

    @property
    def inf(self) -> float:
        if self.trivial:
            return 1.0
        if self.kind == "sine":
            return 1.0 - abs(self.amplitude)
        return min(1.0, 1.0 + self.amplitude)


_SAFE_NAMES = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "log1p", "sqrt", "tanh",
                 "cosh", "sinh", "arctan", "abs", "pi", "e", "power")
}


def _compile_expression(expr: str) -> Callable:
    code = compile(expr, "<profile>", "eval")
    for name in code.co_names:
        if name not in _SAFE_NAMES and name not in ("x", "t"):
            raise ValueError(f"name {name!r} not allowed in custom profile")

    def fn(x, t):
        out = eval(code, {"__builtins__": {}}, {**_SAFE_NAMES, "x": x, "t": t})
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, t).shape)

    return fn


@dataclass(frozen=True)
class CurvatureProfile:
    """Closed-form curvature root k with K = -k^2.

    params by kind:
      constant: k0; power: c, delta; log_example, efimov: none;
      custom: expression (numpy syntax in x and t).
    """

    kind: str
    params: dict = field(default_factory=dict)
    modulation: Modulation = field(default_factory=Modulation)
    domain: tuple = (-math.inf, math.inf, 0.0, math.inf)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "constant" and self.params.get("k0", 1.0) < 0:
            raise ValueError("constant profile needs k0 >= 0")
        if self.kind == "power":
            if self.params.get("c", 1.0) <= 0 or self.params.get("delta", 0.25) <= 0:
                raise ValueError("power profile needs c > 0 and delta > 0")
        if self.kind == "custom":
            object.__setattr__(self, "_custom", _compile_expression(self.params["expression"]))

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, k0=1.0, **kw):
        return cls("constant", {"k0": float(k0)}, **kw)

    @classmethod
    def flat(cls):
        """k = 0; only meaningful as an integrator check."""
        return cls("constant", {"k0": 0.0})

    @classmethod
    def power(cls, c=1.0, delta=0.25, **kw):
        return cls("power", {"c": float(c), "delta": float(delta)}, **kw)

    @classmethod
    def log_example(cls, **kw):
        return cls("log_example", {}, **kw)

    @classmethod
    def efimov(cls, **kw):
        return cls("efimov", {}, **kw)

    @classmethod
    def custom(cls, expression: str, **kw):
        return cls("custom", {"expression": expression}, **kw)

    # properties -----------------------------------------------------------
    @property
    def x_independent(self) -> bool:
        if self.kind == "custom":
            return False
        return self.modulation.trivial

    @property
    def is_flat(self) -> bool:
        return self.kind == "constant" and self.params.get("k0", 1.0) == 0.0

    def base(self, t):
        """Return (kb, kb', kb'') of the t-factor."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            c = np.full_like(t, p.get("k0", 1.0))
            return c, np.zeros_like(t), np.zeros_like(t)
        if self.kind == "power":
            c, d = p.get("c", 1.0), p.get("delta", 0.25)
            u = 1.0 + t
            kb = c * u ** -(1 + d)
            return kb, -(1 + d) * kb / u, (1 + d) * (2 + d) * kb / u ** 2
        if self.kind == "efimov":
            u = 1.0 + t
            return 1 / u, -1 / u ** 2, 2 / u ** 3
        if self.kind == "log_example":
            u = t + 2.0
            lu = np.log(u)
            kb = 1.0 / (u * lu ** 2)
            d1 = -(lu + 2) / (u ** 2 * lu ** 3)
            d2 = (2 * lu ** 2 + 6 * lu + 6) / (u ** 3 * lu ** 4)
            return kb, d1, d2
        raise ValueError("custom profiles have no separable base")

    def _check_domain(self, x, t):
        x0, x1, t0, t1 = self.domain
        if np.any(x < x0) or np.any(x > x1) or np.any(t < t0) or np.any(t > t1):
            raise DomainError(f"point outside profile domain {self.domain}")
        if self.kind in ("power", "efimov") and np.any(t <= -1):
            raise DomainError("t must exceed -1")
        if self.kind == "log_example" and np.any(t <= -1):
            raise DomainError("t must exceed -1")

    def evaluate(self, x, t, check=True) -> CurvatureSample:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if check:
            self._check_domain(x, t)
        x, t = np.broadcast_arrays(x, t)
        if self.kind == "custom":
            return self._evaluate_custom(x, t)
        kb, kb1, _ = self.base(t)
        m, m1, m2 = self.modulation.values(x)
        k = m * kb
        return CurvatureSample(k, m * kb1, m1 * kb, m2 * kb, m1 * kb1, -k * k)

    def _evaluate_custom(self, x, t):
        fn = self._custom
        k = fn(x, t)
        hx, ht = 1e-4, 1e-5 * np.maximum(1.0, np.abs(t))
        kp, km = fn(x + hx, t), fn(x - hx, t)
        k_x = (kp - km) / (2 * hx)
        k_xx = (kp - 2 * k + km) / hx ** 2
        k_t = (fn(x, t + ht) - fn(x, t - ht)) / (2 * ht)
        k_xt = (fn(x + hx, t + ht) - fn(x + hx, t - ht) - fn(x - hx, t + ht)
                + fn(x - hx, t - ht)) / (4 * hx * ht)
        return CurvatureSample(k, k_t, k_x, k_xx, k_xt, -k * k)

    def k(self, x, t):
        return self.evaluate(x, t, check=False).k

    # tails ----------------------------------------------------------------
    def base_tail_integral(self, a: float) -> float:
        """Closed-form int_a^inf kb(t) dt for built-in kinds."""
        p = self.params
        if self.kind == "constant":
            return 0.0 if p.get("k0", 1.0) == 0 else math.inf
        if self.kind == "efimov":
            return math.inf
        if self.kind == "log_example":
            return 1.0 / math.log(a + 2.0)
        if self.kind == "power":
            c, d = p.get("c", 1.0), p.get("delta", 0.25)
            return c / (d * (1.0 + a) ** d)
        raise ValueError("no closed-form tail for custom profiles")

    def base_integral(self, a: float, b: float) -> float:
        """Closed-form int_a^b kb(t) dt for built-in kinds."""
        p = self.params
        if self.kind == "constant":
            return p.get("k0", 1.0) * (b - a)
        if self.kind == "efimov":
            return math.log((1 + b) / (1 + a))
        if self.kind == "log_example":
            return 1.0 / math.log(a + 2.0) - 1.0 / math.log(b + 2.0)
        if self.kind == "power":
            c, d = p.get("c", 1.0), p.get("delta", 0.25)
            return c / d * ((1 + a) ** -d - (1 + b) ** -d)
        raise ValueError("no closed-form integral for custom profiles")


def eval_curvature(profile: CurvatureProfile, x, t) -> CurvatureSample:
    """Evaluate k and its partials; raises DomainError outside the domain."""
    return profile.evaluate(x, t)
