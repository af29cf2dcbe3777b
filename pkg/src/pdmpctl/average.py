"""Long-run average cost by the vanishing-discount procedure."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discounted import BellmanMap, value_iteration
from .errors import SweepDivergence
from .fields import FeedbackPolicy, ValueField
from .model import ModelSpec, make_grid
from .operators import apply_bellman, boundary_argmin, hamiltonian_table
from .simulate import FeedbackStrategy, mc_average_cost, replication_rng, sample_trajectory

DEFAULT_SCHEDULE = tuple(0.5 * 2.0 ** -k for k in range(9))


@dataclass
class SweepPoint:
    alpha: float
    rho: float
    h_sup: float
    h_inf: float
    iterations: int

    def as_tuple(self):
        return (self.alpha, self.rho, self.h_sup, self.h_inf)


@dataclass
class BoundednessReport:
    C: float                     # max rho_alpha
    K_h: float                   # -min h_alpha over sweep and nodes
    b: np.ndarray                # max over the sweep of h_alpha, per support point
    blow_up: bool
    growth: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"C": self.C, "K_h": self.K_h, "b_max": float(np.max(self.b)),
                "blow_up": self.blow_up, **self.growth}


@dataclass
class AverageSolution:
    rho: float
    h: ValueField
    w: ValueField
    policy: FeedbackPolicy
    sweep_trace: list
    residual_field: ValueField
    mc_check: object | None
    boundedness: BoundednessReport
    spread: float
    x0: float
    h_fields: list = field(default_factory=list, repr=False)

    @property
    def residual_max(self) -> float:
        return float(self.residual_field.support_values.max())

    @property
    def residual_min(self) -> float:
        return float(self.residual_field.support_values.min())


def _growth(values, alphas):
    """Relative growth over the latter half of the sweep against the alpha ratio."""
    n = len(values)
    i0 = (n - 1) // 2
    tail = np.asarray(values[i0:], dtype=float)
    grow = float(tail[-1] / tail[0]) if tail[0] > 0 else (math.inf if tail[-1] > 0 else 1.0)
    ratio = alphas[i0] / alphas[-1]
    monotone = bool(np.all(np.diff(tail) > 0))
    return grow, ratio, monotone


def boundedness_report(sweep_trace, h_fields) -> BoundednessReport:
    """Empirical bounds on rho_alpha and h_alpha, and a flag for growth like 1/alpha."""
    if len(sweep_trace) < 2 or len(h_fields) < 2:
        raise ValueError("≥2 points required")
    pts = [p if isinstance(p, SweepPoint) else SweepPoint(*p, 0) for p in sweep_trace]
    alphas = [p.alpha for p in pts]
    rhos = [p.rho for p in pts]
    C = max(rhos)
    K_h = -min(h.minimum() for h in h_fields)
    b = np.max(np.stack([h.support_values for h in h_fields]), axis=0)
    span = [max(abs(h.maximum()), abs(h.minimum())) for h in h_fields]
    g_h, ratio, mono_h = _growth(span, alphas)
    g_r, _, mono_r = _growth(rhos, alphas)
    # bounded families stay flat as alpha shrinks; unbounded ones scale like 1/alpha
    need = math.sqrt(ratio)
    blow = (mono_h and g_h >= need) or (mono_r and g_r >= need)
    return BoundednessReport(C, K_h, b, bool(blow),
                             {"h_growth": g_h, "rho_growth": g_r, "alpha_ratio": ratio})


def optimality_residual(m: ModelSpec, grid, rho: float, h: ValueField, delta=None) -> ValueField:
    """T(rho, h) - h at nodes and reachable exits (undiscounted one-stage operator)."""
    w = apply_bellman(m, grid, 0.0, rho, h, delta)
    diff = w.evaluate(h.support) - h.support_values
    bv = {z: float(diff[np.searchsorted(h.support, z)]) for z in h.boundary_values}
    node = w.evaluate(w.grid) - h.evaluate(w.grid)
    return ValueField(w.grid, node, bv)


def classify_residual(residual: ValueField, tol: float) -> dict:
    r = residual.support_values
    return {"acoe": bool(np.all(np.abs(r) <= tol)), "acoi": bool(np.all(r <= tol)),
            "max": float(r.max()), "min": float(r.min())}


def average_policy(m: ModelSpec, grid, w: ValueField, h: ValueField) -> FeedbackPolicy:
    grid = np.asarray(grid, dtype=float)
    table = hamiltonian_table(m, grid, w.evaluate(grid), h)
    acts = np.argmin(table, axis=1)
    bnd = {z: boundary_argmin(m, z, h)[0] for z in w.boundary_values}
    return FeedbackPolicy(grid, acts, bnd, tuple(m.action_names))


def vanishing_sweep(m: ModelSpec, grid=None, x0: float | None = None, alpha_schedule=None,
                    tol: float | None = None, delta: float | None = None, threads: int | None = None,
                    mc_reps: int = 20, mc_horizon: float = 200.0, seed: int = 0,
                    max_iter: int | None = None) -> AverageSolution:
    grid = make_grid(m) if grid is None else np.asarray(grid, dtype=float)
    sched = DEFAULT_SCHEDULE if alpha_schedule is None else tuple(float(a) for a in alpha_schedule)
    if not sched or any(a <= 0 for a in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("alpha schedule must be positive and strictly decreasing")
    if x0 is None:
        x0 = float(grid[grid.size // 2])
    i0 = int(np.argmin(np.abs(grid - x0)))
    if abs(grid[i0] - x0) > 1e-12:
        raise ValueError(f"x0={x0!r} is not a grid node")
    trace, h_fields = [], []
    report = None
    for alpha in sched:
        sol = value_iteration(m, grid, alpha, tol, max_iter, delta, threads)
        J = sol.value
        j0 = float(J.values[i0])
        h = J - j0
        trace.append(SweepPoint(alpha, alpha * j0, h.maximum(), h.minimum(), sol.iterations))
        h_fields.append(h)
        if len(trace) >= 3:
            report = boundedness_report(trace, h_fields)
            if report.blow_up:
                raise SweepDivergence(
                    f"relative values grow like 1/alpha (growth {report.growth['h_growth']:.3g} "
                    f"over alpha ratio {report.growth['alpha_ratio']:.3g}); no bounded bias exists",
                    report)
    if len(trace) >= 2:
        report = boundedness_report(trace, h_fields)
    else:
        report = BoundednessReport(trace[0].rho, -h_fields[0].minimum(), h_fields[0].support_values, False)
    rho = trace[-1].rho
    h = h_fields[-1]
    w = apply_bellman(m, grid, 0.0, rho, h, delta, threads)
    policy = average_policy(m, grid, w, h)
    residual = optimality_residual(m, grid, rho, h, delta)
    half = len(h_fields) // 2
    spread = max(float(np.max(np.abs(hf.support_values - h.support_values))) for hf in h_fields[half:])
    mc = None
    if mc_reps > 0:
        mc = mc_average_cost(m, float(grid[i0]), FeedbackStrategy(policy), mc_horizon, mc_reps, seed,
                             threads)
    return AverageSolution(rho, h, w, policy, trace, residual, mc, report, spread, float(grid[i0]),
                           h_fields)


@dataclass
class DriftRow:
    horizon: float
    mean: float
    stderr: float


@dataclass
class DriftReport:
    rows: list
    vanishing: bool


def drift_condition_check(m: ModelSpec, policy: FeedbackPolicy, h, horizons, n_rep: int = 50,
                          seed: int = 0, x0: float | None = None, threads=None) -> DriftReport:
    """Monte Carlo estimates of E[h(X_t)] / t for increasing t; reports the trend only.

    `h` is a ValueField (read with clamping) or a callable h(x, t).
    """
    horizons = [float(t) for t in horizons]
    if any(b <= a for a, b in zip(horizons, horizons[1:])) or horizons[0] <= 0:
        raise ValueError("horizons must be positive and increasing")
    x0 = float(policy.grid[policy.grid.size // 2]) if x0 is None else float(x0)
    if isinstance(h, ValueField):
        def hv(x, t):
            return float(h.evaluate(x, clamp=True))
    else:
        hv = h
    strat = FeedbackStrategy(policy)
    rows = []
    for t in horizons:
        vals = np.array([hv(sample_trajectory(m, x0, strat, t, rng=replication_rng(seed, i)).final_state, t) / t
                         for i in range(n_rep)])
        se = float(np.std(vals, ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else 0.0
        rows.append(DriftRow(t, float(np.sum(vals) / n_rep), se))
    first, last = rows[0], rows[-1]
    small = abs(last.mean) <= max(3 * last.stderr, 1e-12)
    vanishing = bool(small or abs(last.mean) < 0.5 * abs(first.mean))
    return DriftReport(rows, vanishing)
