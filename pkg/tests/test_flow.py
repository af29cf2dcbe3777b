import math

import numpy as np
import pytest

from pdmpctl import DomainError
from pdmpctl.flow import ControlPath, check_semigroup, exit_point, flow_at, hazard, hit_time
from pdmpctl.model import parse_model

POLY = """
[domain]
lower = 0.0
upper = 1.0
[flow]
spec = polynomial coefficients=0.6,0.4
[kernel]
interior = point_mass target=0.5
[actions.0]
rate = affine intercept=0.5 slope=1.0
running_cost = constant value=1.0
"""


@pytest.fixture(scope="module")
def poly():
    return parse_model(POLY)


def poly_exact(x, t, c0=0.6, c1=0.4):
    return (x + c0 / c1) * math.exp(c1 * t) - c0 / c1


def triples(m, rng, n, cap=5.0):
    out = []
    while len(out) < n:
        x = float(rng.uniform(0.01, 0.99))
        ts = hit_time(m, x).t
        total = float(rng.uniform(0, min(ts, cap)))
        t = float(rng.uniform(0, total))
        out.append((x, t, total - t))
    return out


def test_flow_at_examples(cycle, decay):
    assert flow_at(cycle, 0.2, 0.3) == pytest.approx(0.5, abs=1e-15)
    assert flow_at(cycle, 0.2, 0.8) == 1.0
    assert flow_at(decay, 0.8, math.log(2)) == pytest.approx(0.4, abs=1e-15)


def test_flow_beyond_exit_rejected(cycle):
    with pytest.raises(DomainError):
        flow_at(cycle, 0.2, 0.9)


def test_hit_time_examples(cycle, decay):
    assert hit_time(cycle, 0.25).t == pytest.approx(0.75, abs=1e-12)
    ht = hit_time(decay, 0.5)
    assert ht.infinite and ht.certified_horizon == 50.0
    assert hit_time(cycle, 1 - 1e-8).t == pytest.approx(1e-8, abs=1e-10)


def test_polynomial_hit_time_matches_exact(poly):
    for x in (0.1, 0.5, 0.9):
        exact = math.log((1 + 1.5) / (x + 1.5)) / 0.4
        ht = hit_time(poly, x)
        assert ht.t == pytest.approx(exact, abs=1e-8)
        assert abs(flow_at(poly, x, ht.t) - 1.0) <= 1e-9
        assert exit_point(poly, x) == 1.0


def test_polynomial_flow_matches_exact(poly):
    for x, t in [(0.1, 0.3), (0.4, 0.5), (0.2, 0.9)]:
        assert flow_at(poly, x, t) == pytest.approx(poly_exact(x, t), abs=1e-12)


def test_hazard_examples(cycle):
    a1 = ControlPath.constant(1)
    a0 = ControlPath.constant(0)
    assert hazard(cycle, 0.3, a1, 0.3) == pytest.approx(0.3, abs=1e-15)
    assert hazard(cycle, 0.3, a0, 0.6) == 0.0
    mixed = ControlPath((0.0, 0.2), (1, 0), 0)
    assert hazard(cycle, 0.3, mixed, 0.5) == pytest.approx(0.2, abs=1e-15)


def test_hazard_affine_rate_is_exact(poly):
    # rate 0.5 + x along the flow; compare against a fine independent integral
    x, t = 0.2, 0.8
    s = np.linspace(0, t, 200001)
    y = (x + 1.5) * np.exp(0.4 * s) - 1.5
    ref = np.trapezoid(0.5 + y, s)
    assert hazard(poly, x, ControlPath.constant(0), t) == pytest.approx(ref, abs=1e-6)


def test_hazard_monotone_and_additive(poly):
    path = ControlPath.constant(0)
    ts = np.linspace(0, 0.9, 31)
    vals = [hazard(poly, 0.1, path, float(t)) for t in ts]
    assert np.all(np.diff(vals) >= 0) and vals[0] == 0.0
    t, s = 0.35, 0.4
    y = flow_at(poly, 0.1, t)
    split = hazard(poly, 0.1, path, t) + hazard(poly, y, path.shift(t), s)
    assert split == pytest.approx(hazard(poly, 0.1, path, t + s), abs=1e-6)


def test_semigroup_closed_forms(cycle, decay):
    rng = np.random.default_rng(7)
    assert check_semigroup(cycle, triples(cycle, rng, 100)) <= 1e-15
    assert check_semigroup(decay, triples(decay, rng, 100)) <= 1e-12


def test_semigroup_integrated_against_half_step(poly):
    rng = np.random.default_rng(8)
    samples = triples(poly, rng, 100)
    assert check_semigroup(poly, samples) <= 1e-6
    half = parse_model(POLY.replace("coefficients=0.6,0.4", "coefficients=0.6,0.4 step=0.0005"))
    dev = max(abs(flow_at(poly, x, t) - flow_at(half, x, t)) for x, t, _ in samples)
    assert dev <= 1e-6


def test_hit_time_translation(cycle, poly):
    rng = np.random.default_rng(9)
    for m in (cycle, poly):
        for _ in range(50):
            x = float(rng.uniform(0.01, 0.99))
            ts = hit_time(m, x).t
            t = float(rng.uniform(0, ts))
            y = flow_at(m, x, t)
            if y >= m.upper:
                continue
            assert abs(hit_time(m, y).t - (ts - t)) <= 1e-9


def test_control_path_shift():
    p = ControlPath((0.0, 0.2, 0.5), (1, 0, 1), 0)
    q = p.shift(0.3)
    assert q.breakpoints == pytest.approx((0.0, 0.2))
    assert q.actions == (0, 1)
    assert q.action_at(0.1) == 0 and q.action_at(0.25) == 1
