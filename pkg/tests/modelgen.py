"""Random admissible models for property tests."""
import numpy as np

from pdmpctl.model import parse_model


def _rate(rng, floor):
    # affine rates stay >= floor on [0, 1]
    if rng.random() < 0.5:
        return f"constant value={float(rng.uniform(floor, floor + 1.5))!r}"
    a = rng.uniform(floor, floor + 1.5)
    b = rng.uniform(floor - a, 1.0)
    return f"affine intercept={float(a)!r} slope={float(b)!r}"


def _cost(rng):
    if rng.random() < 0.5:
        return f"constant value={float(rng.uniform(0, 2))!r}"
    a = rng.uniform(0, 1)
    return f"affine intercept={float(a)!r} slope={float(rng.uniform(0, 1))!r}"


def _kernel(rng):
    k = int(rng.integers(1, 4))
    targets = np.sort(rng.uniform(0.1, 0.9, size=k))
    if k == 1:
        return f"point_mass target={float(targets[0])!r}"
    if rng.random() < 0.5:
        return "uniform targets=" + ",".join(repr(float(t)) for t in targets)
    w = rng.dirichlet(np.ones(k))
    w[-1] = 1.0 - w[:-1].sum()
    return ("atoms targets=" + ",".join(repr(float(t)) for t in targets)
            + " weights=" + ",".join(repr(float(v)) for v in w))


def random_model(rng, kind=None, n_actions=None):
    """Return (ModelSpec, kind) with kind in {"linear", "exponential", "polynomial"}."""
    kind = kind or rng.choice(["linear", "exponential", "polynomial"])
    n_actions = n_actions or int(rng.integers(1, 4))
    xi = 0.0
    if kind == "linear":
        v = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
        flow = f"linear velocity={float(v)!r}"
    elif kind == "exponential":
        flow = f"exponential center=0.0 rate={float(rng.uniform(0.3, 1.5))!r}"
        xi = float(rng.uniform(0.2, 1.0))
    else:
        c0 = rng.uniform(0.4, 1.2)
        c1 = rng.uniform(-0.3, 0.5)
        flow = f"polynomial coefficients={float(c0)!r},{float(c1)!r}"
    lines = ["[model]", "name = random", "[domain]", "lower = 0.0", "upper = 1.0",
             "[flow]", f"spec = {flow}", "[xi]", f"spec = constant value={float(xi)!r}",
             "[kernel]", f"interior = {_kernel(rng)}", "[costs]",
             f"boundary = constant value={float(rng.uniform(0, 1))!r}"]
    for a in range(n_actions):
        rate = _rate(rng, xi)
        lines += [f"[actions.{a}]", f"name = a{a}", f"rate = {rate}",
                  f"running_cost = {_cost(rng)}", f"kernel = {_kernel(rng)}"]
    return parse_model("\n".join(lines) + "\n"), kind
