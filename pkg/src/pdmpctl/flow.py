"""Flow evaluation, boundary hitting times and cumulative hazards."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import BOUNDARY_TOL, ModelSpec, snap_boundary

TIME_TOL = 1e-10


@dataclass(frozen=True)
class HitTime:
    t: float                       # math.inf when the boundary is never reached
    certified_horizon: float = math.inf

    @property
    def infinite(self) -> bool:
        return math.isinf(self.t)

    @property
    def finite(self) -> bool:
        return not self.infinite


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-constant action schedule along one flow line."""

    breakpoints: tuple
    actions: tuple
    boundary_action: int = 0

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if not bp or bp[0] != 0.0 or len(bp) != len(self.actions):
            raise ValueError("breakpoints must start at 0 and match the action list")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    @classmethod
    def constant(cls, a: int, boundary_action: int | None = None) -> "ControlPath":
        return cls((0.0,), (a,), a if boundary_action is None else boundary_action)

    def action_at(self, s: float) -> int:
        return self.actions[bisect.bisect_right(self.breakpoints, s) - 1]

    def shift(self, t: float) -> "ControlPath":
        """The schedule seen from time t onward, re-based at 0."""
        k = bisect.bisect_right(self.breakpoints, t) - 1
        bps = (0.0,) + tuple(b - t for b in self.breakpoints[k + 1:])
        return ControlPath(bps, self.actions[k:], self.boundary_action)

    def segments(self, t0: float, t1: float):
        """(start, end, action) pieces covering [t0, t1]."""
        out = []
        for i, (b, a) in enumerate(zip(self.breakpoints, self.actions)):
            end = self.breakpoints[i + 1] if i + 1 < len(self.breakpoints) else math.inf
            lo, hi = max(b, t0), min(end, t1)
            if hi > lo or (hi == lo == t0 == t1 and b <= t0 < end):
                out.append((lo, hi, a))
        return out


def _bisect_time(g, t_lo, t_hi, tol=TIME_TOL):
    """Root of a monotone sign change of g on [t_lo, t_hi]; g(t_lo) < 0 <= g(t_hi)."""
    while t_hi - t_lo > tol:
        mid = 0.5 * (t_lo + t_hi)
        if g(mid) < 0:
            t_lo = mid
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)


def hit_time(m: ModelSpec, x: float) -> HitTime:
    if not (m.lower - BOUNDARY_TOL <= x <= m.upper + BOUNDARY_TOL):
        raise DomainError(f"state {x!r} outside the closed domain")
    f = m.flow
    t = f.exit_time(x, m.lower, m.upper)
    if math.isinf(t):
        return HitTime(math.inf, m.solver.t_cert)
    return HitTime(max(float(t), 0.0))


def exit_point(m: ModelSpec, x: float) -> float | None:
    """Boundary point reached from x, None when the flow never exits."""
    if not m.flow.closed_form:
        # integrated families keep a strict velocity sign, so they always exit
        return m.upper if m.flow.speed(float(x)) > 0 else m.lower
    ht = hit_time(m, x)
    if ht.infinite:
        return None
    return m.upper if m.flow.speed(x) > 0 else m.lower


def flow_at(m: ModelSpec, x: float, t: float) -> float:
    if t < 0:
        raise DomainError("flow time must be nonnegative")
    ht = hit_time(m, x)
    if t > ht.t + TIME_TOL:
        raise DomainError(f"time {t!r} exceeds the hitting time {ht.t!r} from {x!r}")
    if ht.finite and t >= ht.t - TIME_TOL:
        return exit_point(m, x)
    return snap_boundary(m, float(m.flow.forward(x, t)))


def time_between(m: ModelSpec, x: float, y):
    """Flow time from x to a downstream point y (vectorized over y)."""
    f = m.flow
    t = f.time_between(x, y)
    if t is not None:
        return t
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    up = f.speed(x) > 0
    out = np.empty_like(ys)
    for i, yy in enumerate(ys):
        if yy == x:
            out[i] = 0.0
            continue

        def g(s):
            v = f.forward(x, s)
            return (v - yy) if up else (yy - v)

        hi = f.step
        while g(hi) < 0:
            hi *= 2.0
        out[i] = _bisect_time(g, 0.0, hi, 1e-13)
    return out if np.ndim(y) else float(out[0])


def flow_samples(m: ModelSpec, x: float, T: float, dq: float):
    """Uniform times 0..T (step <= dq) and the flow positions at those times."""
    n = max(1, math.ceil(T / dq - 1e-9))
    ts = np.linspace(0.0, T, n + 1)
    f = m.flow
    if f.closed_form:
        xs = np.asarray(f.forward(x, ts), dtype=float)
    else:
        xs = np.empty(n + 1)
        xs[0] = x
        for k in range(n):
            xs[k + 1] = f.forward(xs[k], ts[k + 1] - ts[k])
    return ts, xs


def path_samples(m: ModelSpec, x: float, path: ControlPath, T: float, dq: float | None = None):
    """Per-segment quadrature samples [(ts, xs, action)] covering [0, T]."""
    dq = m.solver.delta_quad if dq is None else dq
    out = []
    for s0, s1, a in path.segments(0.0, T):
        ts, xs = flow_samples(m, float(m.flow.forward(x, s0)) if s0 > 0 else x, s1 - s0, dq)
        out.append((ts + s0, xs, a))
    return out


def _trap(ts, vals):
    return float(np.sum(0.5 * np.diff(ts) * (vals[1:] + vals[:-1])))


def hazard(m: ModelSpec, x: float, path: ControlPath, t: float) -> float:
    """Cumulative jump hazard along the flow from x up to time t."""
    if t < 0:
        raise DomainError("hazard time must be nonnegative")
    ht = hit_time(m, x)
    if t > ht.t + TIME_TOL:
        raise DomainError(f"time {t!r} exceeds the hitting time {ht.t!r}")
    t = min(t, ht.t)
    if t == 0.0:
        return 0.0
    total = 0.0
    for ts, xs, a in path_samples(m, x, path, t):
        lam = m.actions[a].rate(xs) * np.ones_like(xs)
        total += _trap(ts, lam)
    return total


def check_semigroup(m: ModelSpec, samples) -> float:
    """max |phi(x, t+s) - phi(phi(x, t), s)| over triples (x, t, s)."""
    dev = 0.0
    for x, t, s in samples:
        y = m.flow.forward(m.flow.forward(x, t), s)
        dev = max(dev, abs(float(m.flow.forward(x, t + s)) - float(y)))
    return dev
