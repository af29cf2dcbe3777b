"""Discounted problem: value iteration v_{m+1} = W v_m from v_0 = 0."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, MonotonicityError
from .fields import FeedbackPolicy, ValueField
from .flow import exit_point
from .model import ModelSpec, make_grid
from .operators import apply_bellman, boundary_argmin, get_plan, hamiltonian_table, run_plan

MONOTONE_TOL = 1e-10


def reachable_exits(m: ModelSpec, grid) -> list:
    return sorted({z for z in (exit_point(m, float(x)) for x in grid) if z is not None})


class BellmanMap:
    """W-type map acting on value vectors laid out on the support (nodes plus exits)."""

    def __init__(self, m: ModelSpec, grid, alpha: float, delta=None, threads=None):
        self.m = m
        self.grid = np.asarray(grid, dtype=float)
        self.exits = reachable_exits(m, self.grid)
        proto = ValueField.constant(self.grid, 0.0, self.exits)
        self.support = proto.support
        self.alpha = float(alpha)
        self.threads = threads
        self.plan = get_plan(m, self.grid, self.support, alpha, delta)
        pos = {float(x): i for i, x in enumerate(self.support)}
        self.node_pos = np.array([pos[float(x)] for x in self.grid])
        self.exit_pos = {z: pos[z] for z in self.exits}

    def field(self, vec) -> ValueField:
        return ValueField(self.grid, vec[self.node_pos], {z: vec[p] for z, p in self.exit_pos.items()})

    def vector(self, h: ValueField) -> np.ndarray:
        return np.asarray(h.evaluate(self.support), dtype=float)

    def __call__(self, vec, rho: float = 0.0) -> np.ndarray:
        h = _Packed(self.support, vec)
        out = np.empty_like(vec)
        for o, r in zip(self.plan.orbits, run_plan(self.plan, h, rho, self.threads)):
            out[self.node_pos[o.nodes]] = r.node_w
            if o.finite:
                out[self.exit_pos[o.exit]] = r.terminal_w
        return out


class _Packed:
    """Minimal stand-in for ValueField inside run_plan."""

    def __init__(self, support, values):
        self.support = support
        self.support_values = values


@dataclass
class DiscountedSolution:
    alpha: float
    value: ValueField
    policy: FeedbackPolicy
    iterations: int
    sup_deltas: list
    fixed_point_residual: tuple          # (sup(WJ - J), sup(J - WJ))
    tol: float
    history: list = field(default_factory=list, repr=False)


def value_iteration(m: ModelSpec, grid=None, alpha: float = 1.0, tol: float | None = None,
                    max_iter: int | None = None, delta: float | None = None,
                    threads: int | None = None, keep_history: bool = False) -> DiscountedSolution:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    grid = make_grid(m) if grid is None else np.asarray(grid, dtype=float)
    tol = m.solver.tol if tol is None else float(tol)
    max_iter = m.solver.max_iter if max_iter is None else int(max_iter)
    W = BellmanMap(m, grid, alpha, delta, threads)
    v = np.zeros(W.support.size)
    history = [v.copy()] if keep_history else []
    deltas = []
    prev_small = False
    for it in range(1, max_iter + 1):
        w = W(v)
        diff = w - v
        drop = float(diff.min())
        if drop < -MONOTONE_TOL:
            raise MonotonicityError(f"iterate {it} decreased by {-drop:.3g} (step size or quadrature too coarse)")
        d = float(np.abs(diff).max())
        deltas.append(d)
        if d <= tol and prev_small:
            # v already had |Wv - v| <= tol: keep v and report that residual
            J = W.field(v)
            resid = (float(diff.max()), float((-diff).max()))
            return DiscountedSolution(alpha, J, extract_policy(m, grid, J), it - 1, deltas[:-1],
                                      resid, tol, history)
        prev_small = d <= tol
        v = w
        if keep_history:
            history.append(v.copy())
    raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations "
                           f"(last sup-delta {deltas[-1]:.3g})")


def extract_policy(m: ModelSpec, grid, J: ValueField) -> FeedbackPolicy:
    grid = np.asarray(grid, dtype=float)
    table = hamiltonian_table(m, grid, J.evaluate(grid), J)
    acts = np.argmin(table, axis=1)        # first minimum = lowest index
    bnd = {z: boundary_argmin(m, z, J)[0] for z in J.boundary_values}
    return FeedbackPolicy(grid, acts, bnd, tuple(m.action_names))


def fixed_point_residual(m: ModelSpec, grid, alpha: float, J: ValueField, delta=None):
    """(sup(WJ - J), sup(J - WJ)) over nodes and stored boundary points."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    WJ = apply_bellman(m, grid, alpha, 0.0, J, delta)
    diff = WJ.evaluate(J.support) - J.support_values
    return float(diff.max()), float((-diff).max())
