"""Embedded-chain operators and the one-stage optimization operator.

Two families of routines live here:

* path quadratures (`path_integrals` and its wrappers) evaluate the
  discounted integrals along the flow for an explicitly given action
  schedule;
* the one-stage operator (`one_stage_value`, `apply_bellman`) solves the
  along-flow backward recursion with the action chosen pointwise by
  minimizing f - lam * (w - Qh) against the downstream value.

All grid nodes lying on one flow line share a single backward lattice, so a
Bellman sweep costs one pass per flow line rather than one per node.
"""
from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _sweep
from .errors import (DivergenceError, DomainError, GridHullError, InfeasibleActionError,
                     StepSizeError)
from .fields import HULL_TOL, ValueField
from .flow import ControlPath, exit_point, flow_samples, hit_time, path_samples
from .model import ModelSpec, feasibility_mask, feasible_actions, is_boundary, kernel_arrays

QUAD_TOL = 1e-6     # nominal accuracy of the composite path quadrature
STEP_GUARD = 0.5    # (alpha + max rate) * delta must not exceed this


# ---------------------------------------------------------------- Qh and argmins


def qh(m: ModelSpec, x, a: int, h: ValueField, boundary: bool = False):
    """Expected h after a jump from x (vectorized over x)."""
    targets, weights = kernel_arrays(m, x, a, boundary=boundary)
    vals = h.evaluate(targets) @ weights
    return vals if np.ndim(x) else float(vals[0])


def hamiltonian_argmin(m: ModelSpec, x: float, w_x: float, h: ValueField):
    """(action, value) minimizing f - lam (w_x - Qh) over feasible actions, ties to lowest index."""
    best, ba = math.inf, -1
    for a in feasible_actions(m, x):
        spec = m.actions[a]
        obj = float(spec.running_cost(x)) - float(spec.rate(x)) * (w_x - qh(m, x, a, h))
        if not math.isfinite(obj):
            raise ValueError(f"non-finite Hamiltonian at x={x!r}, action {spec.name}")
        if obj < best:
            best, ba = obj, a
    return ba, best


def hamiltonian_table(m: ModelSpec, xs, ws, h: ValueField):
    """Objective array (n, A) with +inf on infeasible pairs."""
    xs = np.asarray(xs, dtype=float)
    ws = np.asarray(ws, dtype=float)
    mask = feasibility_mask(m, xs)
    out = np.full(mask.shape, np.inf)
    for a, spec in enumerate(m.actions):
        obj = spec.running_cost(xs) - spec.rate(xs) * (ws - qh(m, xs, a, h))
        out[:, a] = np.where(mask[:, a], obj, np.inf)
    return out


def boundary_argmin(m: ModelSpec, z: float, h: ValueField):
    """(action, value) minimizing r(z, a) + Qh(z, a), ties to lowest index."""
    if not is_boundary(m, z):
        raise DomainError(f"{z!r} is not a boundary point")
    best, ba = math.inf, -1
    for a in feasible_actions(m, z):
        v = float(m.actions[a].boundary_cost(z)) + qh(m, z, a, h, boundary=True)
        if v < best:
            best, ba = v, a
    return ba, best


# ---------------------------------------------------------------- path quadrature


def _phi(d):
    """(int_0^1 e^{-d u} du, int_0^1 u e^{-d u} du), stable for small d."""
    d = np.asarray(d, dtype=float)
    small = np.abs(d) < 1e-4
    ds = np.where(small, 1.0, d)
    e = np.exp(-ds)
    p1 = np.where(small, 1.0 - d / 2 + d * d / 6 - d ** 3 / 24, -np.expm1(-ds) / ds)
    p2 = np.where(small, 0.5 - d / 3 + d * d / 8 - d ** 3 / 30, (p1 - e) / ds)
    return p1, p2


def _disc_integral(ts, expo, g):
    """int e^{-E(s)} g(s) ds with E and g linear between samples."""
    dt = np.diff(ts)
    d = np.diff(expo)
    p1, p2 = _phi(d)
    g0 = g[:-1]
    return float(np.sum(np.exp(-expo[:-1]) * dt * (g0 * p1 + (g[1:] - g0) * p2)))


def xi_effective(m: ModelSpec, xs):
    """Largest rate floor compatible with the declared one and the feasible rates."""
    xs = np.asarray(xs, dtype=float)
    mask = feasibility_mask(m, xs)
    lam = np.stack([a.rate(xs) * np.ones_like(xs) for a in m.actions], axis=-1)
    lam_min = np.where(mask, lam, np.inf).min(axis=1)
    return np.minimum(m.xi(xs) * np.ones_like(xs), lam_min)


def tail_horizon(m: ModelSpec, x: float, alpha: float, eps: float | None = None, dq: float | None = None):
    """(T, bound) with e^{-alpha T - Xi(T)} / (alpha + xi_lo) <= eps on a flow line that never exits."""
    eps = m.solver.eps_tail if eps is None else eps
    dq = m.solver.delta_quad if dq is None else dq
    T = 16.0
    while T < 1e7:
        ts, xs = flow_samples(m, x, T, dq)
        xe = xi_effective(m, xs)
        lo = alpha + float(xe.min())
        if lo <= 0:
            raise DivergenceError(f"no discount and no rate floor on the flow line from {x!r}")
        big = alpha * ts + np.concatenate([[0.0], np.cumsum(0.5 * np.diff(ts) * (xe[1:] + xe[:-1]))])
        bound = np.exp(-big) / lo
        ok = np.nonzero(bound <= eps)[0]
        if ok.size:
            k = int(ok[0])
            return float(ts[k]), float(bound[k])
        T *= 2.0
    raise DivergenceError(f"tail bound not reached on the flow line from {x!r}")


@dataclass(frozen=True)
class PathIntegrals:
    calL: float
    Lf: float
    Hr: float
    Gh: float
    horizon: float
    tail: float          # 0 when the flow exits


def path_integrals(m: ModelSpec, x: float, path: ControlPath, alpha: float,
                   h: ValueField | None = None, horizon: float | None = None) -> PathIntegrals:
    """Discounted integrals along the flow from x under a fixed schedule.

    With h None the jump term uses h = 1.  `horizon` truncates the flow
    line explicitly (it must not exceed the hitting time).
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    ht = hit_time(m, x)
    tail = 0.0
    if horizon is not None:
        if horizon > ht.t + 1e-10:
            raise DomainError("horizon beyond the hitting time")
        T = min(horizon, ht.t)
    elif ht.finite:
        T = ht.t
    else:
        T, tail = tail_horizon(m, x, alpha)
    reach = ht.finite and T >= ht.t - 1e-10
    calL = Lf = Gh = 0.0
    e0 = 0.0
    for ts, xs, a in path_samples(m, x, path, T):
        if not np.all(feasibility_mask(m, xs)[:, a]):
            raise InfeasibleActionError(f"action {m.actions[a].name} infeasible along the path")
        spec = m.actions[a]
        lam = spec.rate(xs) * np.ones_like(xs)
        expo = e0 + alpha * (ts - ts[0]) + np.concatenate(
            [[0.0], np.cumsum(0.5 * np.diff(ts) * (lam[1:] + lam[:-1]))])
        calL += _disc_integral(ts, expo, np.ones_like(xs))
        Lf += _disc_integral(ts, expo, spec.running_cost(xs) * np.ones_like(xs))
        q = np.ones_like(xs) if h is None else qh(m, xs, a, h)
        Gh += _disc_integral(ts, expo, lam * q)
        e0 = float(expo[-1])
    Hr = 0.0
    if reach:
        z = exit_point(m, x)
        b = path.boundary_action
        if b not in feasible_actions(m, z):
            raise InfeasibleActionError(f"boundary action {b} infeasible at {z!r}")
        disc = math.exp(-e0)
        Hr = disc * float(m.actions[b].boundary_cost(z))
        Gh += disc * (1.0 if h is None else qh(m, z, b, h, boundary=True))
    return PathIntegrals(calL, Lf, Hr, Gh, T, tail)


def calL_alpha(m, x, path, alpha) -> float:
    return path_integrals(m, x, path, alpha).calL


def L_alpha_f(m, x, path, alpha) -> float:
    return path_integrals(m, x, path, alpha).Lf


def H_alpha_r(m, x, path, alpha) -> float:
    return path_integrals(m, x, path, alpha).Hr


def G_alpha_h(m, x, path, alpha, h: ValueField) -> float:
    return path_integrals(m, x, path, alpha, h).Gh


def path_cost(m, x, path, alpha, rho, h) -> float:
    """-rho calL + Lf + Hr + Gh on one schedule (the one-stage objective)."""
    p = path_integrals(m, x, path, alpha, h)
    return -rho * p.calL + p.Lf + p.Hr + p.Gh


@dataclass(frozen=True)
class DecomposeResiduals:
    calL: float
    Lf: float
    Hr: float
    Gh: float

    def max(self) -> float:
        return max(abs(self.calL), abs(self.Lf), abs(self.Hr), abs(self.Gh))


def decompose_check(m: ModelSpec, x: float, path: ControlPath, t: float, alpha: float,
                    h: ValueField | None = None) -> DecomposeResiduals:
    """Residuals of splitting each path integral at an interior time t."""
    ht = hit_time(m, x)
    if not (0 < t < ht.t):
        raise DomainError("split time must lie strictly inside (0, t*)")
    full = path_integrals(m, x, path, alpha, h)
    head = path_integrals(m, x, path, alpha, h, horizon=t)
    y = float(m.flow.forward(x, t))
    rest_h = None if ht.finite else full.horizon - t
    tail = path_integrals(m, y, path.shift(t), alpha, h, horizon=rest_h)
    lam_int = 0.0
    for ts, xs, a in path_samples(m, x, path, t):
        lam = m.actions[a].rate(xs) * np.ones_like(xs)
        lam_int += float(np.sum(0.5 * np.diff(ts) * (lam[1:] + lam[:-1])))
    disc = math.exp(-alpha * t - lam_int)
    return DecomposeResiduals(
        full.calL - (head.calL + disc * tail.calL),
        full.Lf - (head.Lf + disc * tail.Lf),
        full.Hr - disc * tail.Hr,
        full.Gh - (head.Gh + disc * tail.Gh),
    )


# ---------------------------------------------------------------- backward lattice plans


def _interp_index(support, t, clamp=False):
    t = np.asarray(t, dtype=float)
    s = support
    if clamp:
        t = np.clip(t, s[0], s[-1])
    elif np.any(t < s[0] - HULL_TOL) or np.any(t > s[-1] + HULL_TOL):
        raise GridHullError(f"kernel atom outside the value-field hull [{s[0]!r}, {s[-1]!r}]")
    if s.size == 1:
        return np.zeros(t.shape, np.int64), np.zeros(t.shape)
    j = np.clip(np.searchsorted(s, t, side="right") - 1, 0, s.size - 2)
    fr = np.clip((t - s[j]) / (s[j + 1] - s[j]), 0.0, 1.0)
    return j.astype(np.int64), fr


@dataclass
class _Rows:
    lam: np.ndarray
    f: np.ndarray
    feas: np.ndarray
    aj: np.ndarray
    af: np.ndarray
    aw: np.ndarray


def _rows(m: ModelSpec, xs, support, boundary=False):
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    n, A = xs.size, m.action_count
    feas = feasibility_mask(m, xs)
    if n and not feas.any(axis=1).all():
        bad = xs[~feas.any(axis=1)][0]
        raise InfeasibleActionError(f"no feasible action at x={bad!r}")
    lam = np.zeros((n, A))
    f = np.zeros((n, A))
    kern = [kernel_arrays(m, xs, a, boundary=boundary) for a in range(A)]
    kmax = max(w.size for _, w in kern)
    aj = np.zeros((n, A, kmax), np.int64)
    af = np.zeros((n, A, kmax))
    aw = np.zeros((n, A, kmax))
    for a, spec in enumerate(m.actions):
        lam[:, a] = spec.rate(xs) * np.ones(n)
        f[:, a] = (spec.boundary_cost if boundary else spec.running_cost)(xs) * np.ones(n)
        targets, weights = kern[a]
        k = weights.size
        sel = feas[:, a]
        # only feasible pairs need their atoms inside the hull
        tt = np.where(sel[:, None], targets, support[0])
        j, fr = _interp_index(support, tt)
        aj[:, a, :k] = j
        af[:, a, :k] = fr
        aw[:, a, :k] = weights[None, :]
    return _Rows(lam, f, feas, aj, af, aw)


@dataclass
class _Orbit:
    nodes: np.ndarray          # indices into the output grid
    finite: bool
    exit: float | None
    terminal: _Rows | None     # boundary row (finite) or None
    tail_j: np.ndarray | None  # clamped interpolation of h at the far end (infinite)
    tail_fr: np.ndarray | None
    chain: _Rows
    chain_dt: np.ndarray
    chain_x: np.ndarray
    node_rows: _Rows
    node_dt: np.ndarray
    down: np.ndarray
    tail_bound: np.ndarray     # per node


def _check_step(m, rows: _Rows, dt, alpha):
    if rows.lam.size == 0:
        return
    lam_max = np.where(rows.feas, rows.lam, 0.0).max(axis=1)
    worst = float(np.max((alpha + lam_max) * dt))
    if worst > STEP_GUARD + 1e-12:
        raise StepSizeError(f"(alpha + rate) * delta = {worst:.3g} exceeds {STEP_GUARD}; reduce delta")


def _finite_layout(m: ModelSpec, z: float, xs, delta):
    """Backward lattice from exit point z: positions c_k, node offsets k_i and partial steps s_i."""
    f = m.flow
    if f.closed_form:
        t = np.array([f.exit_time(x, m.lower, m.upper) for x in xs])
        k = np.floor(t / delta).astype(np.int64)
        s = np.clip(t - k * delta, 0.0, delta)
        K = int(k.max())
        c = np.asarray(f.backward(z, np.arange(K + 1) * delta), dtype=float)
        c[0] = z
        return c, k, s
    # integrated flow: march the lattice upstream, then place each node inside its step.
    # In u = sign * x the flow moves toward larger u, so u decreases along the lattice.
    sign = 1.0 if f.speed(z) > 0 or (z == m.upper) else -1.0
    ux = sign * np.asarray(xs, dtype=float)
    c = [z]
    while sign * c[-1] >= ux.min():
        c.append(float(f.backward(c[-1], delta)))
    c = np.array(c)
    u = sign * c
    k = np.searchsorted(-u, -ux, side="right").astype(np.int64) - 1
    s = np.empty(ux.size)
    for i in range(ux.size):
        base, target = c[k[i]], ux[i]
        lo, hi = 0.0, delta
        while hi - lo > 1e-13:
            mid = 0.5 * (lo + hi)
            if sign * f.backward(base, mid) - target >= 0:
                lo = mid
            else:
                hi = mid
        s[i] = 0.5 * (lo + hi)
    return c, k, s


def _build_orbit(m: ModelSpec, idx, xs, key, support, alpha, delta, eps) -> _Orbit:
    xs = np.asarray(xs, dtype=float)
    kind, anchor = key
    if kind == "exit":
        c, k, s = _finite_layout(m, anchor, xs, delta)
        chain_x = c[1:]
        chain = _rows(m, chain_x, support)
        chain_dt = np.full(chain_x.size, delta)
        terminal = _rows(m, [anchor], support, boundary=True)
        node_rows = _rows(m, xs, support)
        orbit = _Orbit(np.asarray(idx), True, anchor, terminal, None, None, chain, chain_dt,
                       chain_x, node_rows, s, k.astype(np.int64), np.zeros(xs.size))
    else:
        f = m.flow
        theta = np.array([0.0 if anchor == x else float(f.time_between(anchor, x)) for x in xs])
        l = np.ceil(theta / delta - 1e-12).astype(np.int64)
        sig = np.clip(l * delta - theta, 0.0, delta)
        lmin, lmax = int(l.min()), int(l.max())
        ext = int(math.ceil(16.0 / delta))
        while True:
            J = lmax + ext
            ls = np.arange(lmin, J + 1)
            p = np.asarray(f.forward(anchor, ls * delta), dtype=float) * np.ones(ls.size)
            xe = xi_effective(m, p)
            lo = alpha + float(xe.min())
            if lo <= 0:
                raise DivergenceError("no discount and no rate floor on a flow line that never exits")
            cum = np.concatenate([[0.0], np.cumsum(0.5 * delta * (xe[1:] + xe[:-1]))])
            big = alpha * (J * delta - theta) + (cum[-1] - cum[l - lmin])
            bound = np.exp(-big) / lo
            if np.all(bound <= eps):
                break
            ext *= 2
            if ext > 50_000_000:
                raise DivergenceError("tail bound not reached on a flow line that never exits")
        # chain row r sits at lattice index J - 1 - r
        chain_x = p[::-1][1:]
        chain = _rows(m, chain_x, support)
        chain_dt = np.full(chain_x.size, delta)
        tj, tf = _interp_index(support, np.array([p[-1]]), clamp=True)
        node_rows = _rows(m, xs, support)
        orbit = _Orbit(np.asarray(idx), False, None, None, tj, tf, chain, chain_dt, chain_x,
                       node_rows, sig, (J - l).astype(np.int64), bound)
    _check_step(m, orbit.chain, orbit.chain_dt, alpha)
    _check_step(m, orbit.node_rows, orbit.node_dt, alpha)
    return orbit


def _orbit_key(m: ModelSpec, x: float):
    z = exit_point(m, x)
    if z is not None:
        return ("exit", z)
    return ("source", float(m.flow.source(x, m.lower, m.upper)))


@dataclass
class BellmanPlan:
    grid: np.ndarray
    support: np.ndarray
    alpha: float
    delta: float
    orbits: list

    @property
    def exits(self):
        return sorted(o.exit for o in self.orbits if o.finite)


def build_plan(m: ModelSpec, grid, support, alpha: float, delta: float | None = None,
               eps: float | None = None) -> BellmanPlan:
    delta = m.solver.delta if delta is None else float(delta)
    eps = m.solver.eps_tail if eps is None else float(eps)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if delta <= 0:
        raise StepSizeError("delta must be positive")
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= m.lower) or np.any(grid >= m.upper):
        raise DomainError("grid nodes must be interior")
    groups: dict = {}
    for i, x in enumerate(grid):
        groups.setdefault(_orbit_key(m, float(x)), []).append(i)
    orbits = [_build_orbit(m, idx, grid[idx], key, support, alpha, delta, eps)
              for key, idx in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1]))]
    return BellmanPlan(grid, np.asarray(support, dtype=float), float(alpha), delta, orbits)


_PLAN_CACHE: dict = {}
_PLAN_LOCK = threading.Lock()


def get_plan(m, grid, support, alpha, delta=None, eps=None) -> BellmanPlan:
    key = (m, np.asarray(grid, float).tobytes(), np.asarray(support, float).tobytes(),
           float(alpha), delta, eps)
    with _PLAN_LOCK:
        plan = _PLAN_CACHE.get(key)
    if plan is None:
        plan = build_plan(m, grid, support, alpha, delta, eps)
        with _PLAN_LOCK:
            if len(_PLAN_CACHE) > 32:
                _PLAN_CACHE.clear()
            _PLAN_CACHE[key] = plan
    return plan


@dataclass
class _OrbitResult:
    node_w: np.ndarray
    node_a: np.ndarray
    chain_w: np.ndarray
    chain_a: np.ndarray
    terminal_a: int
    terminal_w: float


def _run_orbit(o: _Orbit, hs: np.ndarray, alpha: float, rho: float) -> _OrbitResult:
    if o.finite:
        t = o.terminal
        ta, w0 = _sweep.terminal_min(t.f, t.feas, t.aj, t.af, t.aw, hs)
        if ta < 0:
            raise InfeasibleActionError(f"no feasible boundary action at {o.exit!r}")
    else:
        j, fr = int(o.tail_j[0]), float(o.tail_fr[0])
        ta, w0 = -1, (1.0 - fr) * hs[j] + fr * hs[j + 1]
    c = o.chain
    chain_w = np.empty(c.lam.shape[0] + 1)
    chain_a = np.empty(c.lam.shape[0], np.int64)
    bad = _sweep.sweep_chain(w0, c.lam, c.f, c.feas, c.aj, c.af, c.aw, o.chain_dt, hs,
                             alpha, rho, chain_w, chain_a)
    if bad >= 0:
        raise InfeasibleActionError(f"no feasible action at x={o.chain_x[bad]!r}")
    n = o.node_rows
    node_w = np.empty(n.lam.shape[0])
    node_a = np.empty(n.lam.shape[0], np.int64)
    bad = _sweep.sweep_nodes(chain_w, o.down, n.lam, n.f, n.feas, n.aj, n.af, n.aw, o.node_dt,
                             hs, alpha, rho, node_w, node_a)
    if bad >= 0:
        raise InfeasibleActionError("no feasible action at a grid node")
    if not np.all(np.isfinite(node_w)):
        raise DivergenceError("non-finite value in the backward recursion")
    return _OrbitResult(node_w, node_a, chain_w, chain_a, int(ta), float(w0))


def _padded(h: ValueField):
    v = h.support_values
    return np.append(v, v[-1])


def run_plan(plan: BellmanPlan, h: ValueField, rho: float, threads: int | None = None):
    hs = _padded(h)
    if threads and threads > 1 and len(plan.orbits) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda o: _run_orbit(o, hs, plan.alpha, rho), plan.orbits))
    return [_run_orbit(o, hs, plan.alpha, rho) for o in plan.orbits]


def apply_bellman(m: ModelSpec, grid, alpha: float, rho: float, h: ValueField,
                  delta: float | None = None, threads: int | None = None,
                  with_actions: bool = False):
    """w = T_alpha(rho, h) at every node; boundary values min_a {r + Qh} at reachable exits."""
    plan = get_plan(m, grid, h.support, alpha, delta)
    res = run_plan(plan, h, rho, threads)
    values = np.empty(plan.grid.size)
    actions = np.empty(plan.grid.size, np.int64)
    bvals, bacts = {}, {}
    for o, r in zip(plan.orbits, res):
        values[o.nodes] = r.node_w
        actions[o.nodes] = r.node_a
        if o.finite:
            bvals[o.exit] = r.terminal_w
            bacts[o.exit] = r.terminal_a
    w = ValueField(plan.grid, values, bvals)
    if with_actions:
        return w, actions, bacts
    return w


@dataclass(frozen=True)
class OneStageOutput:
    value: float
    trace: ControlPath
    boundary_pair: tuple | None   # (action, value) when the flow exits
    tail_bound: float


def one_stage_value(m: ModelSpec, x: float, alpha: float, rho: float, h: ValueField,
                    delta: float | None = None) -> OneStageOutput:
    delta = m.solver.delta if delta is None else float(delta)
    eps = m.solver.eps_tail
    grid = np.array([float(x)])
    o = _build_orbit(m, [0], grid, _orbit_key(m, float(x)), h.support, alpha, delta, eps)
    r = _run_orbit(o, _padded(h), alpha, rho)
    down = int(o.down[0])
    s = float(o.node_dt[0])
    # forward in time: node step, then chain rows down-1 ... 0
    times, acts = [], []
    if s > 0:
        times.append(0.0)
        acts.append(int(r.node_a[0]))
    for j, row in enumerate(range(down - 1, -1, -1)):
        times.append(s + j * delta)
        acts.append(int(r.chain_a[row]))
    if not times:
        times, acts = [0.0], [int(r.node_a[0])]
    bps, act = [times[0]], [acts[0]]
    for t, a in zip(times[1:], acts[1:]):
        if a != act[-1]:
            bps.append(t)
            act.append(a)
    if o.finite:
        trace = ControlPath(tuple(bps), tuple(act), r.terminal_a)
        pair = (r.terminal_a, r.terminal_w)
    else:
        trace = ControlPath(tuple(bps), tuple(act), act[-1])
        pair = None
    return OneStageOutput(float(r.node_w[0]), trace, pair, float(o.tail_bound[0]))


# ---------------------------------------------------------------- relaxed controls


@dataclass(frozen=True)
class RelaxedCheck:
    gap: float               # min over sampled mixtures minus the vertex minimum
    gaps: np.ndarray
    vertex_action: int
    vertex_value: float
    objectives: np.ndarray   # per feasible action


def relaxed_one_stage_check(m: ModelSpec, x: float, alpha: float, rho: float, h: ValueField,
                            n_samples: int = 1000, seed: int = 0, distributions=None,
                            w_x: float | None = None) -> RelaxedCheck:
    """Hamiltonian under random action mixtures versus its minimum over single actions."""
    acts = feasible_actions(m, x)
    if w_x is None:
        w_x = one_stage_value(m, x, alpha, rho, h).value
    obj = np.array([float(m.actions[a].running_cost(x))
                    - float(m.actions[a].rate(x)) * (w_x - qh(m, x, a, h)) for a in acts])
    k = int(np.argmin(obj))
    vmin = float(obj[k])
    if distributions is None:
        rng = np.random.default_rng(seed)
        distributions = rng.dirichlet(np.ones(len(acts)), size=n_samples)
    mu = np.atleast_2d(np.asarray(distributions, dtype=float))
    if mu.shape[1] != len(acts) or np.any(mu < 0) or np.any(np.abs(mu.sum(axis=1) - 1) > 1e-12):
        raise ValueError("distributions must be probability vectors over the feasible actions")
    gaps = mu @ obj - vmin
    return RelaxedCheck(float(gaps.min()), gaps, acts[k], vmin, obj)
