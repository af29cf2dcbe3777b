"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 numerical failure or unbounded
sweep, 3 bad input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .average import (DEFAULT_SCHEDULE, classify_residual, drift_condition_check, optimality_residual,
                      average_policy, vanishing_sweep)
from .discounted import value_iteration
from .errors import ModelError, PdmpError, SweepDivergence
from .fields import FeedbackPolicy, ValueField, fmt17
from .model import load_model, make_grid, validate_assumptions
from .operators import apply_bellman
from .simulate import (ConstantStrategy, FeedbackStrategy, mc_average_cost, mc_discounted_cost,
                       replication_rng, sample_trajectory)

EXIT_OK, EXIT_CHECK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2, 3


class BadInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v
    return conv


def _schedule(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("schedule must be comma-separated numbers") from None
    if not vals or any(v <= 0 for v in vals) or any(b >= a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError("schedule must be positive and strictly decreasing")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pdmpctl", description="Average-cost control of piecewise deterministic Markov processes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, grid=True):
        sp.add_argument("--model", required=True, help="model config file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=_positive(int), default=1)
        if grid:
            sp.add_argument("--grid", type=_positive(int), default=None, help="interior grid nodes")
            sp.add_argument("--delta", type=_positive(float), default=None, help="along-flow step")
            sp.add_argument("--tol", type=_positive(float), default=None)

    v = sub.add_parser("validate", help="check model assumptions")
    common(v)
    v.add_argument("--horizon", type=_positive(float), default=None, help="certification horizon")

    d = sub.add_parser("solve-discounted", help="value iteration for one discount rate")
    common(d)
    d.add_argument("--alpha", type=float, required=True)
    d.add_argument("--x0", type=float, default=None)

    a = sub.add_parser("solve-average", help="vanishing-discount sweep")
    common(a)
    a.add_argument("--alpha-schedule", type=_schedule, default=None)
    a.add_argument("--x0", type=float, default=None)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--reps", type=int, default=20, help="Monte Carlo replications (0 disables)")
    a.add_argument("--horizon", type=_positive(float), default=200.0, help="Monte Carlo horizon")
    a.add_argument("--acoi-tol", type=_positive(float), default=1e-3)

    s = sub.add_parser("simulate", help="Monte Carlo cost of a policy")
    common(s, grid=False)
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--policy", help="policy CSV (as written by the solvers)")
    grp.add_argument("--action", help="use one action everywhere")
    s.add_argument("--x0", type=float, required=True)
    s.add_argument("--horizon", type=_positive(float), default=100.0)
    s.add_argument("--reps", type=_positive(int), default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=_positive(float), default=None,
                   help="estimate the discounted cost instead of the average cost")
    s.add_argument("--dump-trajectory", action="store_true",
                   help="write the events of replication 0 to trajectory.csv")

    f = sub.add_parser("verify", help="audit a solve-average output directory")
    common(f)
    f.add_argument("--solution", required=True, help="directory written by solve-average")
    f.add_argument("--acoi-tol", type=_positive(float), default=1e-3)
    f.add_argument("--acoe-tol", type=_positive(float), default=1e-2,
                   help="allowed negative residual")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--reps", type=_positive(int), default=20)
    f.add_argument("--horizon", type=_positive(float), default=200.0)
    return p


# ---------------------------------------------------------------- helpers


def _load(path):
    p = Path(path)
    if not p.is_file():
        raise BadInput(f"model file not found: {path}")
    text = p.read_text()
    return load_model(p), hashlib.sha256(text.encode()).hexdigest()


def _outdir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text)


def _json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=False, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _grid(m, args):
    return make_grid(m, args.grid)


def _with_solver(m, args):
    from dataclasses import replace

    kw = {}
    if getattr(args, "delta", None):
        kw["delta"] = args.delta
    if getattr(args, "tol", None):
        kw["tol"] = args.tol
    return replace(m, solver=replace(m.solver, **kw)) if kw else m


def _node(grid, x0):
    if x0 is None:
        return None
    i = int(np.argmin(np.abs(grid - x0)))
    return float(grid[i])


# ---------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    m, digest = _load(args.model)
    rep = validate_assumptions(m, _grid(m, args), args.horizon)
    text = rep.to_json()
    if args.out:
        _write(_outdir(args, ".") / "validation.json", text + "\n")
    print(text)
    if not rep.passed:
        print(f"failed checks: {', '.join(rep.failed())}", file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_solve_discounted(args) -> int:
    if not args.alpha > 0:
        raise BadInput("α must be positive; use solve-average")
    m, digest = _load(args.model)
    m = _with_solver(m, args)
    grid = _grid(m, args)
    t0 = time.perf_counter()
    sol = value_iteration(m, grid, args.alpha, threads=args.threads)
    out = _outdir(args, "out-discounted")
    _write(out / "value.csv", sol.value.to_csv())
    _write(out / "policy.csv", sol.policy.to_csv())
    x0 = _node(grid, args.x0) or float(grid[grid.size // 2])
    _json(out / "summary.json", {
        "command": "solve-discounted", "model": m.name, "model_sha256": digest,
        "alpha": args.alpha, "tol": m.solver.tol, "delta": m.solver.delta, "grid": int(grid.size),
        "iterations": sol.iterations, "fixed_point_residual": list(sol.fixed_point_residual),
        "x0": x0, "value_at_x0": sol.value(x0),
        "artifacts": ["value.csv", "policy.csv"], "seconds": time.perf_counter() - t0,
    })
    print(f"J({x0:g}) = {sol.value(x0):.10g} after {sol.iterations} iterations")
    return EXIT_OK


def _sweep_csv(trace) -> str:
    lines = ["alpha,rho,h_sup,h_inf,iterations"]
    for p in trace:
        lines.append(",".join([fmt17(p.alpha), fmt17(p.rho), fmt17(p.h_sup), fmt17(p.h_inf), str(p.iterations)]))
    return "\n".join(lines) + "\n"


def cmd_solve_average(args) -> int:
    m, digest = _load(args.model)
    m = _with_solver(m, args)
    grid = _grid(m, args)
    sched = args.alpha_schedule or list(DEFAULT_SCHEDULE)
    x0 = _node(grid, args.x0)
    out = _outdir(args, "out-average")
    t0 = time.perf_counter()
    try:
        sol = vanishing_sweep(m, grid, x0, sched, threads=args.threads, mc_reps=args.reps,
                              mc_horizon=args.horizon, seed=args.seed)
    except SweepDivergence as exc:
        doc = {"command": "solve-average", "model": m.name, "model_sha256": digest,
               "status": "unbounded", "relative_value_bound": False, "message": str(exc)}
        if exc.report is not None:
            doc["boundedness"] = exc.report.to_dict()
        _json(out / "summary.json", doc)
        print(f"sweep unbounded: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write(out / "h.csv", sol.h.to_csv())
    _write(out / "w.csv", sol.w.to_csv())
    _write(out / "policy.csv", sol.policy.to_csv())
    _write(out / "residual.csv", sol.residual_field.to_csv())
    _write(out / "sweep.csv", _sweep_csv(sol.sweep_trace))
    cls = classify_residual(sol.residual_field, args.acoi_tol)
    ok = cls["acoi"] and not sol.boundedness.blow_up
    _json(out / "summary.json", {
        "command": "solve-average", "model": m.name, "model_sha256": digest,
        "status": "ok" if ok else "acoi_failed",
        "rho": sol.rho, "x0": sol.x0, "grid": int(grid.size), "delta": m.solver.delta, "tol": m.solver.tol,
        "residual_max": cls["max"], "residual_min": cls["min"], "acoi_tol": args.acoi_tol,
        "acoi": cls["acoi"], "relative_value_bound": not sol.boundedness.blow_up,
        "boundedness": sol.boundedness.to_dict(), "h_spread": sol.spread,
        "sweep_trace": [p.as_tuple() for p in sol.sweep_trace],
        "mc_check": sol.mc_check.to_dict() if sol.mc_check else None,
        "artifacts": ["h.csv", "w.csv", "policy.csv", "residual.csv", "sweep.csv"],
        "seconds": time.perf_counter() - t0,
    })
    print(f"rho = {sol.rho:.10g}; residual in [{cls['min']:.3g}, {cls['max']:.3g}]")
    return EXIT_OK if ok else EXIT_CHECK


def _strategy(m, args):
    if args.action is not None:
        if args.action not in m.action_names:
            raise BadInput(f"unknown action {args.action!r}; choices {m.action_names}")
        return ConstantStrategy(m.action_names.index(args.action))
    p = Path(args.policy)
    if not p.is_file():
        raise BadInput(f"policy file not found: {args.policy}")
    pol = FeedbackPolicy.from_csv(p.read_text(), tuple(m.action_names))
    if np.any(pol.actions >= m.action_count):
        raise BadInput("policy refers to an unknown action")
    return FeedbackStrategy(pol)


def cmd_simulate(args) -> int:
    m, digest = _load(args.model)
    if not (m.lower < args.x0 < m.upper):
        raise BadInput("x0 must be interior")
    strat = _strategy(m, args)
    out = _outdir(args, "out-simulate")
    if args.alpha:
        est = mc_discounted_cost(m, args.x0, strat, args.alpha, args.reps, args.horizon, args.seed, args.threads)
        kind = "discounted"
    else:
        est = mc_average_cost(m, args.x0, strat, args.horizon, args.reps, args.seed, args.threads)
        kind = "average"
    if args.dump_trajectory:
        tr = sample_trajectory(m, args.x0, strat, args.horizon, alpha=args.alpha or 0.0,
                               rng=replication_rng(args.seed, 0))
        _write(out / "trajectory.csv", tr.to_csv())
    _json(out / "summary.json", {"command": "simulate", "model": m.name, "model_sha256": digest,
                                 "estimate": kind, "x0": args.x0, **est.to_dict()})
    print(f"{kind} cost = {est.mean:.10g} ± {est.stderr:.3g} ({est.n_rep} replications)")
    return EXIT_OK


def cmd_verify(args) -> int:
    m, digest = _load(args.model)
    m = _with_solver(m, args)
    sol_dir = Path(args.solution)
    try:
        summary = json.loads((sol_dir / "summary.json").read_text())
        h = ValueField.from_csv((sol_dir / "h.csv").read_text())
        policy = FeedbackPolicy.from_csv((sol_dir / "policy.csv").read_text(), tuple(m.action_names))
        rho = float(summary["rho"])
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise BadInput(f"cannot read solution directory: {exc}") from None
    grid = h.grid
    checks = []
    resid = optimality_residual(m, grid, rho, h)
    cls = classify_residual(resid, args.acoi_tol)
    checks.append({"id": "optimality_residual", "pass": cls["max"] <= args.acoi_tol and cls["min"] >= -args.acoe_tol,
                   "max": cls["max"], "min": cls["min"], "upper": args.acoi_tol, "lower": -args.acoe_tol})
    w = apply_bellman(m, grid, 0.0, rho, h)
    recomputed = average_policy(m, grid, w, h)
    same = bool(np.array_equal(recomputed.actions, policy.actions)) and \
        recomputed.boundary_actions == policy.boundary_actions
    checks.append({"id": "policy_consistency", "pass": same,
                   "mismatched_nodes": int(np.sum(recomputed.actions != policy.actions))})
    x0 = float(summary.get("x0", grid[grid.size // 2]))
    est = mc_average_cost(m, x0, FeedbackStrategy(policy), args.horizon, args.reps, args.seed, args.threads)
    gap = abs(est.mean - rho)
    bound = 3 * est.stderr + 1e-2
    checks.append({"id": "simulation_agreement", "pass": gap <= bound, "mc_mean": est.mean,
                   "mc_stderr": est.stderr, "gap": gap, "bound": bound})
    horizons = [args.horizon / 4, args.horizon / 2, args.horizon]
    drift = drift_condition_check(m, policy, h, horizons, n_rep=args.reps, seed=args.seed, x0=x0)
    checks.append({"id": "drift_trend", "pass": True, "informational": True, "vanishing": drift.vanishing,
                   "rows": [[r.horizon, r.mean, r.stderr] for r in drift.rows]})
    ok = all(c["pass"] for c in checks)
    out = Path(args.out) if args.out else sol_dir
    out.mkdir(parents=True, exist_ok=True)
    _json(out / "verify.json", {"command": "verify", "model": m.name, "model_sha256": digest,
                                "rho": rho, "pass": ok, "checks": checks})
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['id']}")
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {"validate": cmd_validate, "solve-discounted": cmd_solve_discounted,
            "solve-average": cmd_solve_average, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:          # --help exits 0, usage errors exit 3
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (BadInput, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PdmpError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
