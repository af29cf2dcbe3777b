"""Closed registry of model families.

Every callable ingredient of a model (flow, jump rate, costs, rate floor,
post-jump kernel, feasibility predicate) is one of the families below,
written in a config as ``<family> key=value key=value``.  List-valued
parameters use commas: ``atoms targets=0.25,0.75 weights=0.5,0.5``.
"""
from __future__ import annotations

import math
from dataclasses import MISSING, dataclass, fields
from typing import ClassVar

import numpy as np

from . import _rk4
from .errors import ModelError

MASS_TOL = 1e-12


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(float(u)) for u in v)
    return repr(float(v))


class Family:
    kind: ClassVar[str] = ""
    family: ClassVar[str] = ""

    def to_text(self) -> str:
        parts = [self.family]
        parts += [f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self)]
        return " ".join(parts)


# ---------------------------------------------------------------- scalars


@dataclass(frozen=True)
class Constant(Family):
    kind = "scalar"
    family = "constant"
    value: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value) if np.ndim(x) else float(self.value)

    def bounds(self, lo, hi):
        return self.value, self.value


@dataclass(frozen=True)
class Affine(Family):
    kind = "scalar"
    family = "affine"
    intercept: float
    slope: float

    def __call__(self, x):
        return self.intercept + self.slope * x

    def bounds(self, lo, hi):
        a, b = self(lo), self(hi)
        return min(a, b), max(a, b)


# ---------------------------------------------------------------- flows


@dataclass(frozen=True)
class LinearFlow(Family):
    """x + v t."""

    kind = "flow"
    family = "linear"
    velocity: float
    closed_form: ClassVar[bool] = True

    def speed(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.velocity) if np.ndim(x) else self.velocity

    def forward(self, x, t):
        return x + self.velocity * t

    def backward(self, x, t):
        return x - self.velocity * t

    def exit_time(self, x, lower, upper):
        v = self.velocity
        if v > 0:
            return (upper - x) / v
        if v < 0:
            return (x - lower) / (-v)
        return math.inf

    def time_between(self, x, y):
        return (np.asarray(y) - x) / self.velocity

    def source(self, x, lower, upper):
        if self.velocity > 0:
            return lower
        if self.velocity < 0:
            return upper
        return x

    def check(self, lower, upper):
        pass


@dataclass(frozen=True)
class ExponentialFlow(Family):
    """c + (x - c) exp(-k t); k > 0 relaxes toward c, k < 0 expands away."""

    kind = "flow"
    family = "exponential"
    center: float
    rate: float
    closed_form: ClassVar[bool] = True

    def speed(self, x):
        return -self.rate * (np.asarray(x, dtype=float) - self.center) if np.ndim(x) else -self.rate * (x - self.center)

    def forward(self, x, t):
        return self.center + (x - self.center) * np.exp(-self.rate * t)

    def backward(self, x, t):
        return self.center + (x - self.center) * np.exp(self.rate * t)

    def exit_time(self, x, lower, upper):
        c, k = self.center, self.rate
        d = x - c
        if d == 0.0 or k == 0.0:
            return math.inf
        z = upper if -k * d > 0 else lower
        if z == c:
            return math.inf
        ratio = d / (z - c)
        if ratio <= 0.0:
            return math.inf
        t = math.log(ratio) / k
        return t if t >= 0.0 else math.inf

    def time_between(self, x, y):
        return np.log((x - self.center) / (np.asarray(y) - self.center)) / self.rate

    def source(self, x, lower, upper):
        if x == self.center or self.rate == 0.0:
            return x
        if self.rate > 0:
            return upper if x > self.center else lower
        return self.center

    def check(self, lower, upper):
        pass


@dataclass(frozen=True)
class PolynomialFlow(Family):
    """dx/dt = sum_i c_i x**i, integrated by fixed-step RK4.

    The velocity must keep one strict sign on the closed domain so every
    flow line is monotone toward the boundary.
    """

    kind = "flow"
    family = "polynomial"
    coefficients: tuple
    step: float = 1e-3
    closed_form: ClassVar[bool] = False

    def speed(self, x):
        if isinstance(x, float):
            out = 0.0
            for c in reversed(self.coefficients):
                out = out * x + c
            return out
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c in reversed(self.coefficients):
            out = out * x + c
        return out if out.ndim else float(out)

    def _c(self):
        return _rk4.as_coefficients(self.coefficients)

    def _rk4(self, x, t, direction):
        c = self._c()
        if np.ndim(t):
            ts = direction * np.asarray(t, dtype=float)
            return _rk4.rk4_flow_times(c, float(x), ts.ravel(), self.step).reshape(ts.shape)
        if np.ndim(x):
            xs = np.asarray(x, dtype=float)
            return _rk4.rk4_flow_states(c, xs.ravel(), direction * float(t), self.step).reshape(xs.shape)
        return float(_rk4.rk4_flow(c, float(x), direction * float(t), self.step))

    def forward(self, x, t):
        return self._rk4(x, t, 1.0)

    def backward(self, x, t):
        return self._rk4(x, t, -1.0)

    def exit_time(self, x, lower, upper):
        z = upper if self.speed(float(x)) > 0 else lower
        if abs(float(x) - z) <= 1e-12:
            return 0.0
        return float(_rk4.rk4_exit(self._c(), float(x), z, self.step, 1e-10))

    def time_between(self, x, y):
        return None

    def source(self, x, lower, upper):
        return lower if self.speed(0.5 * (lower + upper)) > 0 else upper

    def check(self, lower, upper):
        if self.step <= 0:
            raise ModelError("polynomial flow step must be positive")
        xs = np.linspace(lower, upper, 2001)
        v = self.speed(xs)
        roots = [r.real for r in np.roots(list(reversed(self.coefficients)) or [0.0])
                 if abs(r.imag) < 1e-12 and lower - 1e-12 <= r.real <= upper + 1e-12]
        if roots or not (np.all(v > 0) or np.all(v < 0)):
            raise ModelError("polynomial flow velocity must keep a strict sign on the closed domain")


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class PointMass(Family):
    kind = "kernel"
    family = "point_mass"
    target: float

    def atoms(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.full((x.size, 1), self.target), np.ones(1)

    def fixed_targets(self):
        return (self.target,)


@dataclass(frozen=True)
class Atoms(Family):
    kind = "kernel"
    family = "atoms"
    targets: tuple
    weights: tuple

    def atoms(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.tile(np.asarray(self.targets), (x.size, 1)), np.asarray(self.weights)

    def fixed_targets(self):
        return self.targets


@dataclass(frozen=True)
class UniformAtoms(Family):
    kind = "kernel"
    family = "uniform"
    targets: tuple

    def atoms(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = len(self.targets)
        return np.tile(np.asarray(self.targets), (x.size, 1)), np.full(m, 1.0 / m)

    def fixed_targets(self):
        return self.targets


@dataclass(frozen=True)
class AffineMap(Family):
    """Single atom at offset + scale * x (state dependent)."""

    kind = "kernel"
    family = "affine_map"
    scale: float
    offset: float

    def atoms(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (self.offset + self.scale * x)[:, None], np.ones(1)

    def fixed_targets(self):
        return None


# ---------------------------------------------------------------- predicates


@dataclass(frozen=True)
class AllStates(Family):
    kind = "predicate"
    family = "all"

    def __call__(self, x):
        return np.ones(np.shape(x), dtype=bool) if np.ndim(x) else True


@dataclass(frozen=True)
class Below(Family):
    kind = "predicate"
    family = "below"
    threshold: float

    def __call__(self, x):
        return x < self.threshold


@dataclass(frozen=True)
class Above(Family):
    kind = "predicate"
    family = "above"
    threshold: float

    def __call__(self, x):
        return x > self.threshold


REGISTRY = {
    "scalar": {c.family: c for c in (Constant, Affine)},
    "flow": {c.family: c for c in (LinearFlow, ExponentialFlow, PolynomialFlow)},
    "kernel": {c.family: c for c in (PointMass, Atoms, UniformAtoms, AffineMap)},
    "predicate": {c.family: c for c in (AllStates, Below, Above)},
}


def parse_family(kind: str, text: str, **extra) -> Family:
    """Parse ``"<family> k=v ..."`` into a registry instance of `kind`."""
    tokens = text.split()
    if not tokens:
        raise ModelError(f"empty {kind} specification")
    name, rest = tokens[0], tokens[1:]
    try:
        cls = REGISTRY[kind][name]
    except KeyError:
        raise ModelError(f"unknown {kind} family '{name}'") from None
    params = dict(extra)
    for tok in rest:
        key, sep, raw = tok.partition("=")
        if not sep:
            raise ModelError(f"malformed parameter '{tok}' in {kind} '{name}'")
        params[key] = raw
    spec = {f.name: f for f in fields(cls)}
    unknown = set(params) - set(spec)
    if unknown:
        raise ModelError(f"unknown parameter(s) {sorted(unknown)} for {kind} '{name}'")
    kwargs = {}
    for key, f in spec.items():
        if key not in params:
            if f.default is not MISSING:
                continue
            raise ModelError(f"missing parameter '{key}' for {kind} '{name}'")
        raw = params[key]
        try:
            if f.type in ("tuple", tuple):
                vals = raw if isinstance(raw, tuple) else tuple(float(u) for u in str(raw).split(","))
                kwargs[key] = tuple(float(u) for u in vals)
            else:
                kwargs[key] = float(raw)
        except ValueError:
            raise ModelError(f"parameter '{key}' of {kind} '{name}' is not numeric: {raw!r}") from None
        vals = kwargs[key] if isinstance(kwargs[key], tuple) else (kwargs[key],)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError(f"parameter '{key}' of {kind} '{name}' must be finite")
    return cls(**kwargs)

