"""PDMP control models on an interval, loaded from an INI-style config.

Config layout (every family value is ``<family> key=value ...``)::

    [model]            name
    [domain]           lower, upper
    [flow]             spec
    [kernel]           interior, boundary       (defaults for all actions)
    [costs]            running, boundary        (defaults for all actions)
    [xi]               spec                     (rate floor, default constant 0)
    [solver]           numeric defaults, see SolverDefaults
    [actions.N]        name, rate, running_cost, boundary_cost,
                       kernel, boundary_kernel, feasible

``dump_model`` writes a fully resolved canonical form; reloading it yields
an identical ModelSpec.
"""
from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import families as fam
from .errors import DomainError, InfeasibleActionError, ModelError

BOUNDARY_TOL = 1e-9
MASS_TOL = 1e-12


@dataclass(frozen=True)
class SolverDefaults:
    delta: float = 1e-3          # along-flow Euler step
    delta_flow: float = 1e-3     # RK4 step for integrated flows
    delta_quad: float = 1e-3     # composite trapezoid step
    eps_tail: float = 1e-6       # tail bound on unbounded flow lines
    t_cert: float = 50.0         # horizon for infinite hitting-time certificates
    tol: float = 1e-6
    max_iter: int = 100_000
    grid: int = 201
    n_max: int = 1_000_000       # jump cap per simulated trajectory

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"solver setting '{f.name}' must be positive, got {v!r}")


@dataclass(frozen=True)
class ActionSpec:
    name: str
    rate: fam.Family
    running_cost: fam.Family
    boundary_cost: fam.Family
    kernel: fam.Family
    boundary_kernel: fam.Family
    feasible: fam.Family = field(default_factory=fam.AllStates)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    lower: float
    upper: float
    flow: fam.Family
    actions: tuple
    xi: fam.Family
    solver: SolverDefaults = field(default_factory=SolverDefaults)

    dimension = 1

    @property
    def action_count(self) -> int:
        return len(self.actions)

    @property
    def action_names(self) -> list:
        return [a.name for a in self.actions]

    def restrict(self, names) -> "ModelSpec":
        """Sub-model keeping only the named actions (in their original order)."""
        keep = tuple(a for a in self.actions if a.name in set(names))
        if not keep:
            raise ModelError(f"no action among {list(names)}")
        return replace(self, actions=keep, name=f"{self.name}/{{{','.join(a.name for a in keep)}}}")


@dataclass(frozen=True)
class KernelAtom:
    target: float
    weight: float


# ------------------------------------------------------------------ loading


def _get(cp, section, key, default=None):
    if cp.has_section(section) and cp.has_option(section, key):
        return cp.get(section, key).strip()
    return default


def _float(text, what):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ModelError(f"{what} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ModelError(f"{what} must be finite")
    return v


def _check_kernel(k: fam.Family, lower, upper, where):
    if isinstance(k, fam.Atoms):
        if len(k.targets) != len(k.weights) or not k.targets:
            raise ModelError(f"{where}: targets and weights must have the same non-zero length")
        if any(not (0.0 < w <= 1.0) for w in k.weights):
            raise ModelError(f"{where}: kernel weights must lie in (0, 1]")
        total = math.fsum(k.weights)
        if abs(total - 1.0) > MASS_TOL:
            raise ModelError(f"{where}: kernel mass {total:g} ≠ 1")
    if isinstance(k, fam.UniformAtoms) and not k.targets:
        raise ModelError(f"{where}: uniform kernel needs at least one target")
    targets = k.fixed_targets()
    if targets is not None and any(not (lower < t < upper) for t in targets):
        raise ModelError(f"{where}: kernel targets must lie strictly inside ({lower}, {upper})")


def _check_nonneg(s: fam.Family, lower, upper, where):
    lo, _ = s.bounds(lower, upper)
    if lo < 0:
        raise ModelError(f"{where} must be nonnegative on the closed domain (minimum {lo:g})")


def parse_model(text: str) -> ModelSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ModelError(f"config parse error: {exc}") from None

    name = _get(cp, "model", "name", "model")
    if not cp.has_section("domain"):
        raise ModelError("missing [domain] section")
    lower = _float(_get(cp, "domain", "lower"), "domain.lower")
    upper = _float(_get(cp, "domain", "upper"), "domain.upper")
    if not lower < upper:
        raise ModelError("domain.lower must be below domain.upper")
    dim = _get(cp, "model", "dimension", "1")
    if dim != "1":
        raise ModelError("only one-dimensional models are supported")

    solver_kw = {}
    if cp.has_section("solver"):
        known = {f.name: f for f in fields(SolverDefaults)}
        for key, raw in cp.items("solver"):
            if key not in known:
                raise ModelError(f"unknown solver setting '{key}'")
            v = _float(raw, f"solver.{key}")
            solver_kw[key] = int(v) if key in ("max_iter", "grid", "n_max") else v
    solver = SolverDefaults(**solver_kw)

    flow_text = _get(cp, "flow", "spec")
    if flow_text is None:
        raise ModelError("missing [flow] spec")
    extra = {}
    if flow_text.split()[0] == "polynomial" and "step=" not in flow_text:
        extra["step"] = solver.delta_flow
    flow = fam.parse_family("flow", flow_text, **extra)
    flow.check(lower, upper)

    xi = fam.parse_family("scalar", _get(cp, "xi", "spec", "constant value=0.0"))
    _check_nonneg(xi, lower, upper, "rate floor")

    d_kernel = _get(cp, "kernel", "interior")
    d_bkernel = _get(cp, "kernel", "boundary", d_kernel)
    d_running = _get(cp, "costs", "running")
    d_boundary = _get(cp, "costs", "boundary", "constant value=0.0")

    sections = [s for s in cp.sections() if s.startswith("actions.")]
    try:
        sections.sort(key=lambda s: int(s.split(".", 1)[1]))
    except ValueError:
        raise ModelError("action sections must be named [actions.<integer>]") from None
    if not sections:
        raise ModelError("at least one [actions.N] section is required")
    actions = []
    for i, sec in enumerate(sections):
        def need(key, default):
            v = _get(cp, sec, key, default)
            if v is None:
                raise ModelError(f"[{sec}] missing '{key}' and no default given")
            return v

        aname = _get(cp, sec, "name", f"a{i}")
        rate = fam.parse_family("scalar", need("rate", None))
        running = fam.parse_family("scalar", need("running_cost", d_running))
        bcost = fam.parse_family("scalar", need("boundary_cost", d_boundary))
        kern_text = need("kernel", d_kernel)
        kern = fam.parse_family("kernel", kern_text)
        bkern = fam.parse_family("kernel", need("boundary_kernel", d_bkernel or kern_text))
        feas = fam.parse_family("predicate", _get(cp, sec, "feasible", "all"))
        _check_nonneg(rate, lower, upper, f"[{sec}] rate")
        _check_nonneg(running, lower, upper, f"[{sec}] running cost")
        _check_nonneg(bcost, lower, upper, f"[{sec}] boundary cost")
        _check_kernel(kern, lower, upper, f"[{sec}] kernel")
        _check_kernel(bkern, lower, upper, f"[{sec}] boundary kernel")
        actions.append(ActionSpec(aname, rate, running, bcost, kern, bkern, feas))
    if len({a.name for a in actions}) != len(actions):
        raise ModelError("action names must be unique")
    return ModelSpec(name, lower, upper, flow, tuple(actions), xi, solver)


def load_model(source) -> ModelSpec:
    """Load from a path or from config text (anything containing a newline)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ModelError(f"cannot read model file: {exc}") from None
        return parse_model(text)
    return parse_model(source)


def dump_model(m: ModelSpec) -> str:
    r = repr
    lines = ["[model]", f"name = {m.name}", "dimension = 1", "",
             "[domain]", f"lower = {r(float(m.lower))}", f"upper = {r(float(m.upper))}", "",
             "[flow]", f"spec = {m.flow.to_text()}", "",
             "[xi]", f"spec = {m.xi.to_text()}", "",
             "[solver]"]
    for k, v in asdict(m.solver).items():
        lines.append(f"{k} = {v if isinstance(v, int) else r(float(v))}")
    for i, a in enumerate(m.actions):
        lines += ["", f"[actions.{i}]", f"name = {a.name}",
                  f"rate = {a.rate.to_text()}",
                  f"running_cost = {a.running_cost.to_text()}",
                  f"boundary_cost = {a.boundary_cost.to_text()}",
                  f"kernel = {a.kernel.to_text()}",
                  f"boundary_kernel = {a.boundary_kernel.to_text()}",
                  f"feasible = {a.feasible.to_text()}"]
    return "\n".join(lines) + "\n"


def fixture_path(name: str) -> Path:
    return Path(__file__).with_name("fixtures") / f"{name}.cfg"


def load_fixture(name: str) -> ModelSpec:
    return load_model(fixture_path(name))


# ------------------------------------------------------------------ evaluation


def is_boundary(m: ModelSpec, x: float) -> bool:
    return abs(x - m.lower) <= BOUNDARY_TOL or abs(x - m.upper) <= BOUNDARY_TOL


def snap_boundary(m: ModelSpec, x: float) -> float:
    if abs(x - m.lower) <= BOUNDARY_TOL:
        return m.lower
    if abs(x - m.upper) <= BOUNDARY_TOL:
        return m.upper
    return x


def _check_closure(m, x):
    if not (m.lower - BOUNDARY_TOL <= x <= m.upper + BOUNDARY_TOL) or not math.isfinite(x):
        raise DomainError(f"state {x!r} outside [{m.lower}, {m.upper}]")


def feasible_actions(m: ModelSpec, x: float) -> list:
    """Ascending indices of the actions allowed at x (interior or boundary)."""
    _check_closure(m, x)
    out = [i for i, a in enumerate(m.actions) if bool(a.feasible(x))]
    if not out:
        raise InfeasibleActionError(f"no feasible action at x={x!r}")
    return out


def feasibility_mask(m: ModelSpec, xs) -> np.ndarray:
    """Boolean array (len(xs), action_count)."""
    xs = np.asarray(xs, dtype=float)
    return np.stack([np.asarray(a.feasible(xs), dtype=bool) & np.ones(xs.shape, bool)
                     for a in m.actions], axis=-1)


def _feasible_or_raise(m, x, a):
    if not (0 <= a < m.action_count):
        raise InfeasibleActionError(f"action index {a} out of range")
    if a not in feasible_actions(m, x):
        raise InfeasibleActionError(f"action {m.actions[a].name} infeasible at x={x!r}")


def _finite(v, what):
    v = float(v)
    if not math.isfinite(v):
        raise ModelError(f"non-finite {what}")
    return v


def eval_rate(m: ModelSpec, x: float, a: int) -> float:
    _feasible_or_raise(m, x, a)
    return _finite(m.actions[a].rate(x), "rate")


def eval_running_cost(m: ModelSpec, x: float, a: int) -> float:
    _feasible_or_raise(m, x, a)
    return _finite(m.actions[a].running_cost(x), "running cost")


def eval_boundary_cost(m: ModelSpec, z: float, a: int) -> float:
    _feasible_or_raise(m, z, a)
    return _finite(m.actions[a].boundary_cost(z), "boundary cost")


def kernel_arrays(m: ModelSpec, x, a: int, boundary: bool = False):
    """(targets (n, k), weights (k,)) for states x under action a."""
    spec = m.actions[a]
    return (spec.boundary_kernel if boundary else spec.kernel).atoms(x)


def kernel(m: ModelSpec, x: float, a: int) -> list:
    _feasible_or_raise(m, x, a)
    targets, weights = kernel_arrays(m, x, a, boundary=is_boundary(m, x))
    return [KernelAtom(float(t), float(w)) for t, w in zip(targets[0], weights)]


def make_grid(m: ModelSpec, n: int | None = None) -> np.ndarray:
    """n uniformly spaced interior nodes (the two domain endpoints excluded)."""
    n = m.solver.grid if n is None else int(n)
    if n < 1:
        raise ModelError("grid needs at least one node")
    return np.linspace(m.lower, m.upper, n + 2)[1:-1]


# ------------------------------------------------------------------ validation


@dataclass
class ValidationReport:
    model: str
    records: list

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.records)

    def record(self, check_id: str) -> dict:
        for r in self.records:
            if r["id"] == check_id:
                return r
        raise KeyError(check_id)

    def failed(self) -> list:
        return [r["id"] for r in self.records if not r["pass"]]

    def to_json(self) -> str:
        return json.dumps({"model": self.model, "pass": self.passed, "checks": self.records},
                          indent=2, allow_nan=False, default=float)


def _rec(check_id, ok, measured, threshold, **extra):
    def num(v):
        v = float(v)
        return v if math.isfinite(v) else str(v)

    rec = {"id": check_id, "pass": bool(ok), "measured": num(measured), "threshold": num(threshold)}
    rec.update(extra)
    return rec


def validate_assumptions(m: ModelSpec, grid=None, horizon: float | None = None) -> ValidationReport:
    """Numerical model checks at every grid node; failures are reported, never raised."""
    from .flow import flow_samples, hit_time  # flow depends on this module

    grid = make_grid(m) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ModelError("grid must be non-empty")
    horizon = m.solver.t_cert if horizon is None else float(horizon)
    dq = m.solver.delta_quad
    n_act = m.action_count
    boundary_pts = [m.lower, m.upper]
    recs = []

    # feasibility
    mask = feasibility_mask(m, grid)
    bmask = feasibility_mask(m, np.array(boundary_pts))
    empty = int((~mask.any(axis=1)).sum() + (~bmask.any(axis=1)).sum())
    recs.append(_rec("feasible_nonempty", empty == 0, empty, 0))

    # sign checks at sampled points
    def masked_min(vals, msk):
        v = np.where(msk, vals, np.inf)
        return float(v.min()) if np.isfinite(v).any() else 0.0

    rates = np.stack([a.rate(grid) * np.ones_like(grid) for a in m.actions], axis=-1)
    runs = np.stack([a.running_cost(grid) * np.ones_like(grid) for a in m.actions], axis=-1)
    bz = np.array(boundary_pts)
    bcosts = np.stack([a.boundary_cost(bz) * np.ones_like(bz) for a in m.actions], axis=-1)
    xi = m.xi(grid) * np.ones_like(grid)
    rmin = masked_min(rates, mask)
    recs.append(_rec("rate_nonneg", rmin >= 0, rmin, 0.0))
    fmin = masked_min(runs, mask)
    recs.append(_rec("running_cost_nonneg", fmin >= 0, fmin, 0.0))
    bmin = masked_min(bcosts, bmask)
    recs.append(_rec("boundary_cost_nonneg", bmin >= 0, bmin, 0.0))

    margin = masked_min(rates - xi[:, None], mask)
    recs.append(_rec("rate_floor", margin >= 0, margin, 0.0))

    # integrals along flow lines, with the largest floor consistent with the rates
    starts = np.concatenate([[m.lower], grid, [m.upper]])
    k_xi = 0.0
    tail_max = 0.0
    f_int = 0.0
    f_tail = 0.0
    lam_int = 0.0
    for x in starts:
        ht = hit_time(m, float(x))
        T = min(ht.t, horizon)
        if T <= 0:
            continue
        ts, xs = flow_samples(m, float(x), T, dq)
        msk = feasibility_mask(m, xs)
        lam = np.stack([a.rate(xs) * np.ones_like(xs) for a in m.actions], axis=-1)
        fv = np.stack([a.running_cost(xs) * np.ones_like(xs) for a in m.actions], axis=-1)
        lam_min = np.where(msk, lam, np.inf).min(axis=1)
        xi_eff = np.minimum(m.xi(xs) * np.ones_like(xs), lam_min)
        lam_sup = np.where(msk, lam, -np.inf).max(axis=1)
        f_sup = np.where(msk, fv, -np.inf).max(axis=1)
        dt = np.diff(ts)
        big_xi = np.concatenate([[0.0], np.cumsum(0.5 * dt * (xi_eff[1:] + xi_eff[:-1]))])
        surv = np.exp(-big_xi)
        k_xi = max(k_xi, float(np.sum(0.5 * dt * (surv[1:] + surv[:-1]))))
        integrand = surv * f_sup
        f_int = max(f_int, float(np.sum(0.5 * dt * (integrand[1:] + integrand[:-1]))))
        lam_int = max(lam_int, float(np.sum(0.5 * dt * (lam_sup[1:] + lam_sup[:-1]))))
        if ht.infinite:
            tail_max = max(tail_max, float(surv[-1]))
            f_tail = max(f_tail, float(integrand[-1]))
    eps = m.solver.eps_tail
    recs.append(_rec("floor_integrability", math.isfinite(k_xi) and tail_max <= eps, k_xi, eps,
                     tail_survival=tail_max, horizon=horizon))
    recs.append(_rec("running_cost_integrability", math.isfinite(f_int) and f_tail <= eps, f_int, eps,
                     tail_integrand=f_tail))
    recs.append(_rec("rate_integrability", math.isfinite(lam_int), lam_int, math.inf))

    # kernels at nodes and boundary points
    mass_err = 0.0
    outside = 0
    hull_lo, hull_hi = float(grid.min()), float(grid.max())
    self_nodes = np.zeros((grid.size, n_act), dtype=bool)
    stationary_self = 0
    for a in range(n_act):
        for pts, is_b, msk in ((grid, False, mask[:, a]), (bz, True, bmask[:, a])):
            targets, weights = kernel_arrays(m, pts, a, boundary=is_b)
            mass_err = max(mass_err, abs(math.fsum(weights) - 1.0))
            ok = (targets > m.lower) & (targets < m.upper) & (targets >= hull_lo - 1e-12) & (targets <= hull_hi + 1e-12)
            outside += int((~ok & msk[:, None]).sum())
            if not is_b:
                hit = (np.abs(targets - pts[:, None]) <= MASS_TOL).any(axis=1) & msk
                self_nodes[:, a] = hit
    vel = np.abs(np.asarray(m.flow.speed(grid), dtype=float)) * np.ones_like(grid)
    for a in range(n_act):
        stationary_self += int((self_nodes[:, a] & (vel == 0) & (rates[:, a] > 0)).sum())
    # an isolated self-atom is a single point of a flow line and carries no jump mass;
    # a run of neighbouring nodes with self-atoms under one action is a genuine violation
    runs_of_self = int((self_nodes[1:] & self_nodes[:-1]).sum())
    recs.append(_rec("kernel_mass", mass_err <= MASS_TOL, mass_err, MASS_TOL))
    recs.append(_rec("kernel_support", outside == 0, outside, 0,
                     hull=[hull_lo, hull_hi]))
    recs.append(_rec("kernel_self_atom", runs_of_self == 0 and stationary_self == 0,
                     int(self_nodes.any(axis=1).sum()), 0,
                     adjacent_pairs=runs_of_self, stationary=stationary_self))
    return ValidationReport(m.name, recs)
