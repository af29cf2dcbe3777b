"""Grid functions: piecewise-linear value fields and nearest-node feedback policies."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridHullError, ModelError

HULL_TOL = 1e-12


def fmt17(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class ValueField:
    grid: np.ndarray
    values: np.ndarray
    boundary_values: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size == 0:
            raise ValueError("grid and values must be equal-length 1-D arrays")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("value field contains non-finite entries")
        bv = {float(z): float(w) for z, w in self.boundary_values.items()}
        if not all(math.isfinite(w) for w in bv.values()):
            raise ValueError("boundary values must be finite")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "boundary_values", bv)
        pts = np.concatenate([g, np.array(sorted(bv), dtype=float)])
        vals = np.concatenate([v, np.array([bv[z] for z in sorted(bv)], dtype=float)])
        order = np.argsort(pts, kind="stable")
        object.__setattr__(self, "_support", pts[order])
        object.__setattr__(self, "_support_values", vals[order])

    # support = interior nodes plus stored boundary points
    @property
    def support(self) -> np.ndarray:
        return self._support

    @property
    def support_values(self) -> np.ndarray:
        return self._support_values

    @classmethod
    def constant(cls, grid, c: float, boundary_points=()) -> "ValueField":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.full(grid.shape, float(c)), {z: float(c) for z in boundary_points})

    def evaluate(self, x, clamp: bool = False):
        s = self._support
        xa = np.asarray(x, dtype=float)
        if not clamp and (np.any(xa < s[0] - HULL_TOL) or np.any(xa > s[-1] + HULL_TOL)):
            raise GridHullError(f"value field read outside [{s[0]!r}, {s[-1]!r}]")
        out = np.interp(xa, s, self._support_values)
        return out if out.ndim else float(out)

    __call__ = evaluate

    def with_values(self, values, boundary_values=None) -> "ValueField":
        return ValueField(self.grid, values,
                          self.boundary_values if boundary_values is None else boundary_values)

    def __add__(self, c: float) -> "ValueField":
        return ValueField(self.grid, self.values + c, {z: w + c for z, w in self.boundary_values.items()})

    def __sub__(self, c: float) -> "ValueField":
        return self + (-c)

    def minimum(self) -> float:
        return float(self._support_values.min())

    def maximum(self) -> float:
        return float(self._support_values.max())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "value", "location"])
        for x, v in zip(self.grid, self.values):
            w.writerow([fmt17(x), fmt17(v), "interior"])
        for z in sorted(self.boundary_values):
            w.writerow([fmt17(z), fmt17(self.boundary_values[z]), "boundary"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ValueField":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or "x" not in rows[0] or "value" not in rows[0]:
            raise ModelError("value CSV needs x,value columns")
        xs, vs, bv = [], [], {}
        for r in rows:
            if r.get("location", "interior") == "boundary":
                bv[float(r["x"])] = float(r["value"])
            else:
                xs.append(float(r["x"]))
                vs.append(float(r["value"]))
        return cls(np.array(xs), np.array(vs), bv)


@dataclass(frozen=True)
class FeedbackPolicy:
    """One action per node (nearest-node lookup) plus one per boundary point."""

    grid: np.ndarray
    actions: np.ndarray
    boundary_actions: dict = field(default_factory=dict)
    action_names: tuple = ()

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        a = np.asarray(self.actions, dtype=np.int64)
        if g.shape != a.shape or g.size == 0:
            raise ValueError("grid and actions must be equal-length 1-D arrays")
        g.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "boundary_actions",
                           {float(z): int(b) for z, b in self.boundary_actions.items()})
        object.__setattr__(self, "_mids", 0.5 * (g[1:] + g[:-1]))

    @classmethod
    def constant(cls, m, grid, a: int) -> "FeedbackPolicy":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.full(grid.shape, a), {m.lower: a, m.upper: a}, tuple(m.action_names))

    def node_index(self, x):
        # x exactly on a midpoint goes to the lower node
        return np.searchsorted(self._mids, x, side="left")

    def action(self, x: float, boundary: bool = False) -> int:
        if boundary:
            for z, a in self.boundary_actions.items():
                if abs(z - x) <= 1e-9:
                    return a
            raise KeyError(f"no boundary action stored for {x!r}")
        return int(self.actions[self.node_index(x)])

    def control_path(self, m, z: float):
        """Action schedule seen along the flow line started at z."""
        from .flow import ControlPath, exit_point, hit_time, time_between

        ht = hit_time(m, z)
        end = exit_point(m, z)
        if end is None:
            end = _flow_limit(m, z)
        lo, hi = sorted((z, end))
        mids = self._mids[(self._mids > lo) & (self._mids < hi)]
        if end < z:
            mids = mids[::-1]
        idx = int(self.node_index(z))
        if end > z and idx < self._mids.size and self._mids[idx] == z:
            idx += 1  # leaves the midpoint upward at once
        bps, acts = [0.0], [int(self.actions[idx])]
        if mids.size:
            times = np.atleast_1d(time_between(m, z, mids))
            step = 1 if end > z else -1
            for t, _ in zip(times, mids):
                idx += step
                a = int(self.actions[idx])
                if a != acts[-1] and t > bps[-1]:
                    bps.append(float(t))
                    acts.append(a)
        bnd = self.action(m.upper if end == m.upper else m.lower, boundary=True) if ht.finite else acts[-1]
        return ControlPath(tuple(bps), tuple(acts), bnd)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "action", "name", "location"])
        names = self.action_names or ()
        for x, a in zip(self.grid, self.actions):
            w.writerow([fmt17(x), int(a), names[a] if a < len(names) else "", "interior"])
        for z in sorted(self.boundary_actions):
            a = self.boundary_actions[z]
            w.writerow([fmt17(z), a, names[a] if a < len(names) else "", "boundary"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, action_names=()) -> "FeedbackPolicy":
        rows = list(csv.DictReader(io.StringIO(text)))
        xs, acts, bnd = [], [], {}
        for r in rows:
            if r.get("location", "interior") == "boundary":
                bnd[float(r["x"])] = int(r["action"])
            else:
                xs.append(float(r["x"]))
                acts.append(int(r["action"]))
        if not xs:
            raise ModelError("policy CSV has no interior rows")
        return cls(np.array(xs), np.array(acts), bnd, tuple(action_names))


def _flow_limit(m, z):
    """Where a flow line that never exits accumulates."""
    from .families import ExponentialFlow

    if isinstance(m.flow, ExponentialFlow) and m.flow.rate > 0:
        return m.flow.center
    return z
