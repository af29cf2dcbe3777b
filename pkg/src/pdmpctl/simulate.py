"""Trajectory sampling and Monte Carlo cost estimators.

Jump times are drawn by inverse transform: with E = -ln u the jump is the
first time the cumulative hazard reaches E, or the boundary hitting time if
the hazard stays below E until then.  Each replication draws from its own
Philox stream keyed by (seed, replication index).
"""
from __future__ import annotations

import csv
import io
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SimulationError
from .fields import FeedbackPolicy, fmt17
from .flow import ControlPath, exit_point, hit_time, path_samples
from .model import ModelSpec, feasibility_mask, feasible_actions, is_boundary, kernel_arrays
from .operators import _phi

SPONTANEOUS = "spontaneous"
BOUNDARY = "boundary"
TIME_TOL = 1e-10


# ---------------------------------------------------------------- strategies


class Strategy:
    def path_for(self, m: ModelSpec, n: int, z: float) -> ControlPath:
        raise NotImplementedError


class FeedbackStrategy(Strategy):
    def __init__(self, policy: FeedbackPolicy):
        self.policy = policy
        self._cache: dict = {}
        self._lock = threading.Lock()

    def path_for(self, m, n, z):
        with self._lock:
            p = self._cache.get(z)
        if p is None:
            p = self.policy.control_path(m, z)
            with self._lock:
                self._cache[z] = p
        return p


class OpenLoopStrategy(Strategy):
    """Schedule per jump index n; indices missing from the table use `default`."""

    def __init__(self, table: dict, default: ControlPath | None = None):
        self.table = dict(table)
        self.default = default

    def path_for(self, m, n, z):
        p = self.table.get(n, self.default)
        if p is None:
            raise SimulationError(f"open-loop table has no schedule for jump {n}")
        return p


class ConstantStrategy(Strategy):
    def __init__(self, action: int):
        self.path = ControlPath.constant(action)

    def path_for(self, m, n, z):
        return self.path


# ---------------------------------------------------------------- segment caches


def _cum_trap(ts, v):
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(ts) * (v[1:] + v[:-1]))])


def _cum_disc(ts, alpha, g):
    dt = np.diff(ts)
    p1, p2 = _phi(alpha * dt)
    piece = np.exp(-alpha * ts[:-1]) * dt * (g[:-1] * p1 + (g[1:] - g[:-1]) * p2)
    return np.concatenate([[0.0], np.cumsum(piece)])


class _Segment:
    """Cumulative hazard and costs along the flow from z under one schedule."""

    def __init__(self, m: ModelSpec, z: float, path: ControlPath, alpha: float):
        self.m, self.z, self.path, self.alpha = m, z, path, alpha
        self.tstar = hit_time(m, z).t
        self.exit = exit_point(m, z)
        self.lock = threading.Lock()
        self.T = 0.0
        self._build(min(self.tstar, 8.0))

    def _build(self, T):
        m = self.m
        pieces = path_samples(m, self.z, self.path, T, m.solver.delta_quad)
        ts, xs, lam, f, act = [], [], [], [], []
        for pts, pxs, a in pieces:
            if not feasibility_mask(m, pxs)[:, a].all():
                raise SimulationError(f"action {m.actions[a].name} infeasible along the flow from {self.z!r}")
            ts.append(pts)
            xs.append(pxs)
            lam.append(m.actions[a].rate(pxs) * np.ones_like(pxs))
            f.append(m.actions[a].running_cost(pxs) * np.ones_like(pxs))
            act.append(np.full(pts.size, a))
        data = dict(ts=np.concatenate(ts), xs=np.concatenate(xs), lam=np.concatenate(lam),
                    f=np.concatenate(f), act=np.concatenate(act))
        data["L"] = _cum_trap(data["ts"], data["lam"])
        data["F"] = _cum_trap(data["ts"], data["f"])
        data["Fa"] = _cum_disc(data["ts"], self.alpha, data["f"]) if self.alpha > 0 else data["F"]
        self.data = data
        self.T = T

    def ensure(self, T):
        if T <= self.T or self.T >= self.tstar:
            return self.data
        with self.lock:
            if T > self.T:
                new = max(T, 2.0 * self.T)
                self._build(min(new, self.tstar))
            return self.data

    def _interval(self, d, t):
        k = int(np.searchsorted(d["ts"], t, side="right")) - 1
        return min(max(k, 0), d["ts"].size - 2)

    def _point(self, d, k, t):
        u = t - d["ts"][k]
        a = int(d["act"][k + 1]) if d["ts"][k + 1] > d["ts"][k] else int(d["act"][k])
        x = float(self.m.flow.forward(d["xs"][k], u)) if u > 0 else float(d["xs"][k])
        return x, a, u

    def hazard(self, t):
        d = self.ensure(t)
        k = self._interval(d, t)
        x, a, u = self._point(d, k, t)
        lam_t = float(self.m.actions[a].rate(x))
        return d["L"][k] + 0.5 * u * (d["lam"][k] + lam_t)

    def costs(self, t):
        """(int_0^t f, int_0^t e^{-alpha s} f) along the segment."""
        d = self.ensure(t)
        k = self._interval(d, t)
        x, a, u = self._point(d, k, t)
        f_t = float(self.m.actions[a].running_cost(x))
        fk = d["f"][k]
        plain = d["F"][k] + 0.5 * u * (fk + f_t)
        if self.alpha > 0:
            p1, p2 = _phi(self.alpha * u)
            disc = d["Fa"][k] + math.exp(-self.alpha * d["ts"][k]) * u * (fk * float(p1) + (f_t - fk) * float(p2))
        else:
            disc = plain
        return plain, disc

    def position(self, t):
        if self.exit is not None and t >= self.tstar - TIME_TOL:
            return self.exit
        d = self.ensure(t)
        k = self._interval(d, t)
        return self._point(d, k, t)[0]

    def first_passage(self, E, t_max):
        """Smallest t <= t_max with hazard(t) >= E, or None."""
        t_max = min(t_max, self.tstar)
        while self.data["L"][-1] < E and self.T < t_max:
            if self.T > 1e7:
                return None  # the hazard has stopped growing for all practical purposes
            self.ensure(min(max(2.0 * self.T, 1.0), t_max))
        d = self.data
        t_end = min(self.T, t_max)
        if self.hazard(t_end) < E:
            return None
        k = int(np.searchsorted(d["L"], E, side="left"))
        lo = float(d["ts"][k - 1]) if k > 0 else 0.0
        hi = min(float(d["ts"][min(k, d["ts"].size - 1)]), t_end)
        lo = min(lo, hi)
        while hi - lo > TIME_TOL:
            mid = 0.5 * (lo + hi)
            if self.hazard(mid) < E:
                lo = mid
            else:
                hi = mid
        return hi


class _SegmentCache:
    def __init__(self, m, alpha):
        self.m, self.alpha = m, alpha
        self.store: dict = {}
        self.lock = threading.Lock()

    def get(self, z, path):
        key = (z, path)
        with self.lock:
            s = self.store.get(key)
        if s is None:
            s = _Segment(self.m, z, path, self.alpha)
            with self.lock:
                s = self.store.setdefault(key, s)
        return s


# ---------------------------------------------------------------- sampling


@dataclass
class TrajectorySample:
    events: list                   # (T_n, Z_n, cause)
    running_cost_integral: float
    boundary_cost_sum: float
    pstar: int
    truncated: bool
    final_state: float
    discounted_cost: float = 0.0
    end_time: float = 0.0

    @property
    def total_cost(self) -> float:
        return self.running_cost_integral + self.boundary_cost_sum

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "T_n", "Z_n", "cause"])
        for n, (t, z, c) in enumerate(self.events, start=1):
            w.writerow([n, fmt17(t), fmt17(z), c])
        return buf.getvalue()


def replication_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _draw_atom(m, y, a, boundary, v):
    targets, weights = kernel_arrays(m, y, a, boundary=boundary)
    cdf = np.cumsum(weights)
    k = min(int(np.searchsorted(cdf, v * cdf[-1], side="left")), weights.size - 1)
    z = float(targets[0, k])
    if not (m.lower < z < m.upper):
        raise SimulationError(f"post-jump state {z!r} is not interior")
    return z


def _jump(seg: _Segment, u: float, t_max: float):
    """(time, cause) for one draw u, or (None, None) if nothing happens before t_max."""
    E = -math.log(u)
    t = seg.first_passage(E, t_max)
    if t is not None:
        return t, SPONTANEOUS
    if seg.exit is not None and seg.tstar <= t_max:
        return seg.tstar, BOUNDARY
    return None, None


def sample_jump_time(m: ModelSpec, x: float, strategy: Strategy, rng=None, u: float | None = None,
                     cache: _SegmentCache | None = None):
    if not (m.lower < x < m.upper) or is_boundary(m, x):
        raise DomainError("jump times are sampled from interior states")
    if u is None:
        u = rng.random()
    u = max(u, np.finfo(float).tiny)
    cache = cache or _SegmentCache(m, 0.0)
    seg = cache.get(x, strategy.path_for(m, 0, x))
    t, cause = _jump(seg, u, math.inf)
    if t is None:
        raise SimulationError(f"no jump ever occurs from {x!r}")
    return t, cause


def sample_trajectory(m: ModelSpec, x0: float, strategy: Strategy, horizon: float, seed: int = 0,
                      alpha: float = 0.0, max_jumps: int | None = None, rng=None,
                      cache: _SegmentCache | None = None, n_max: int | None = None) -> TrajectorySample:
    """Simulate from x0 until `horizon` or until `max_jumps` events, whichever is first."""
    if not (m.lower < x0 < m.upper) or is_boundary(m, x0):
        raise DomainError("x0 must be interior")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = rng if rng is not None else replication_rng(seed, 0)
    cache = cache if cache is not None else _SegmentCache(m, alpha)
    n_max = m.solver.n_max if n_max is None else n_max
    events = []
    t_now, z = 0.0, float(x0)
    run = bnd = disc = 0.0
    pstar = 0
    truncated = False
    final = z
    n = 0
    while True:
        if max_jumps is not None and n >= max_jumps:
            final = z
            break
        if n >= n_max:
            truncated = True
            final = z
            break
        path = strategy.path_for(m, n, z)
        seg = cache.get(z, path)
        u = max(rng.random(), np.finfo(float).tiny)
        v = rng.random()
        remaining = horizon - t_now
        tau, cause = _jump(seg, u, remaining + TIME_TOL)
        if tau is None or t_now + tau > horizon:
            if math.isinf(remaining):
                raise SimulationError(f"no jump ever occurs from {z!r} and the horizon is unbounded")
            c_plain, c_disc = seg.costs(remaining)
            run += c_plain
            disc += math.exp(-alpha * t_now) * c_disc
            final = seg.position(remaining)
            t_now = horizon
            break
        c_plain, c_disc = seg.costs(tau)
        run += c_plain
        disc += math.exp(-alpha * t_now) * c_disc
        t_next = t_now + tau
        if cause == BOUNDARY:
            y = seg.exit
            a = path.boundary_action
            if a not in feasible_actions(m, y):
                raise SimulationError(f"boundary action {a} infeasible at {y!r}")
            r = float(m.actions[a].boundary_cost(y))
            bnd += r
            disc += math.exp(-alpha * t_next) * r
            pstar += 1
            z_new = _draw_atom(m, y, a, True, v)
        else:
            y = seg.position(tau)
            a = path.action_at(tau)
            z_new = _draw_atom(m, y, a, False, v)
        if t_next <= t_now:
            raise SimulationError("non-increasing jump times")
        events.append((t_next, z_new, cause))
        t_now, z = t_next, z_new
        n += 1
        final = z
        if t_now >= horizon:
            break
    return TrajectorySample(events, run, bnd, pstar, truncated, final, disc, t_now)


# ---------------------------------------------------------------- estimators


@dataclass
class McEstimate:
    mean: float
    stderr: float
    n_rep: int
    seed: int
    horizon: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"mean": self.mean, "stderr": self.stderr, "n_rep": self.n_rep,
             "seed": self.seed, "horizon": self.horizon}
        d.update(self.extra)
        return d


def _replicate(fn, n_rep, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(fn, range(n_rep)))
    else:
        vals = [fn(i) for i in range(n_rep)]
    return np.array(vals, dtype=float)


def _estimate(vals, n_rep, seed, horizon, **extra):
    mean = float(np.sum(vals) / n_rep)
    se = float(np.std(vals, ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else 0.0
    return McEstimate(mean, se, n_rep, seed, horizon, extra)


def _check_reps(n_rep):
    if n_rep < 1:
        raise ValueError("n_rep must be at least 1")


def mc_discounted_cost(m: ModelSpec, x0: float, strategy: Strategy, alpha: float, n_rep: int = 100,
                       horizon: float | None = None, seed: int = 0, threads: int | None = None) -> McEstimate:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _check_reps(n_rep)
    horizon = 20.0 / alpha if horizon is None else float(horizon)
    cache = _SegmentCache(m, alpha)

    def one(i):
        return sample_trajectory(m, x0, strategy, horizon, alpha=alpha, rng=replication_rng(seed, i),
                                 cache=cache).discounted_cost

    vals = _replicate(one, n_rep, threads)
    return _estimate(vals, n_rep, seed, horizon, tail_factor=math.exp(-alpha * horizon))


def mc_average_cost(m: ModelSpec, x0: float, strategy: Strategy, horizon: float = 100.0, n_rep: int = 100,
                    seed: int = 0, threads: int | None = None) -> McEstimate:
    _check_reps(n_rep)
    cache = _SegmentCache(m, 0.0)
    jumps = []

    def one(i):
        s = sample_trajectory(m, x0, strategy, horizon, rng=replication_rng(seed, i), cache=cache)
        if s.truncated:
            raise SimulationError("jump cap reached before the horizon")
        jumps.append(len(s.events))
        return s.total_cost / horizon

    vals = _replicate(one, n_rep, threads)
    return _estimate(vals, n_rep, seed, horizon, mean_jumps=float(np.mean(jumps)))


def mc_truncated_cost(m: ModelSpec, x0: float, strategy: Strategy, alpha: float, m_jumps: int,
                      n_rep: int = 100, seed: int = 0, horizon: float | None = None,
                      threads: int | None = None) -> McEstimate:
    """Discounted cost accumulated up to the m-th jump (boundary cost of that jump included)."""
    if m_jumps < 0:
        raise ValueError("m_jumps must be nonnegative")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _check_reps(n_rep)
    if m_jumps == 0:
        return McEstimate(0.0, 0.0, n_rep, seed, 0.0, {"m_jumps": 0})
    horizon = 40.0 / alpha if horizon is None else float(horizon)
    cache = _SegmentCache(m, alpha)

    def one(i):
        return sample_trajectory(m, x0, strategy, horizon, alpha=alpha, max_jumps=m_jumps,
                                 rng=replication_rng(seed, i), cache=cache).discounted_cost

    vals = _replicate(one, n_rep, threads)
    return _estimate(vals, n_rep, seed, horizon, m_jumps=m_jumps, tail_factor=math.exp(-alpha * horizon))
