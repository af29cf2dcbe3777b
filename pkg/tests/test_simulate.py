import math

import numpy as np
import pytest
from scipy import stats

from oracles import cycle_a0_discounted, cycle_a0_truncated_one_jump, decay_average
from pdmpctl.discounted import value_iteration
from pdmpctl.fields import FeedbackPolicy, ValueField
from pdmpctl.flow import ControlPath, hit_time
from pdmpctl.model import fixture_path, make_grid, parse_model
from pdmpctl.operators import apply_bellman
from pdmpctl.simulate import (BOUNDARY, SPONTANEOUS, ConstantStrategy, FeedbackStrategy,
                              OpenLoopStrategy, mc_average_cost, mc_discounted_cost,
                              mc_truncated_cost, replication_rng, sample_jump_time,
                              sample_trajectory)


@pytest.fixture(scope="module")
def free():
    text = fixture_path("cycle1d").read_text()
    text = text.replace("boundary = constant value=0.5", "boundary = constant value=0.0")
    text = text.replace("running_cost = constant value=1.0", "running_cost = constant value=0.0")
    text = text.replace("running_cost = constant value=0.8", "running_cost = constant value=0.0")
    return parse_model(text)


@pytest.fixture(scope="module")
def a0_policy(cycle, grid):
    return FeedbackPolicy.constant(cycle, grid, 0)


def test_jump_time_examples(cycle, a0_policy):
    fb = FeedbackStrategy(a0_policy)
    for u in (1e-9, 0.3, 0.999):
        assert sample_jump_time(cycle, 0.3, fb, u=u) == (pytest.approx(0.7, abs=1e-12), BOUNDARY)
    a1 = ConstantStrategy(1)
    t, cause = sample_jump_time(cycle, 0.3, a1, u=math.exp(-0.2))
    assert cause == SPONTANEOUS and t == pytest.approx(0.2, abs=1e-9)
    t, cause = sample_jump_time(cycle, 0.3, a1, u=math.exp(-0.9))
    assert cause == BOUNDARY and t == pytest.approx(0.7, abs=1e-12)


def test_deterministic_cycle_events(cycle_a0):
    s = sample_trajectory(cycle_a0, 0.5, ConstantStrategy(0), 2.0, seed=0)
    assert [t for t, _, _ in s.events] == pytest.approx([0.5, 1.0, 1.5, 2.0], abs=1e-12)
    assert all(z == 0.5 and c == BOUNDARY for _, z, c in s.events)
    assert s.pstar == 4
    short = sample_trajectory(cycle_a0, 0.5, ConstantStrategy(0), 0.3, seed=0)
    assert short.events == [] and short.running_cost_integral == pytest.approx(0.3, abs=1e-15)


def test_same_seed_same_sample(cycle):
    a = sample_trajectory(cycle, 0.5, ConstantStrategy(1), 30.0, seed=5)
    b = sample_trajectory(cycle, 0.5, ConstantStrategy(1), 30.0, seed=5)
    assert a == b and a.to_csv() == b.to_csv()
    c = sample_trajectory(cycle, 0.5, ConstantStrategy(1), 30.0, seed=6)
    assert c.events != a.events


def test_event_invariants(cycle):
    s = sample_trajectory(cycle, 0.2, ConstantStrategy(1), 200.0, seed=1)
    times = [0.0] + [t for t, _, _ in s.events]
    starts = [0.2] + [z for _, z, _ in s.events]
    assert np.all(np.diff(times) > 0)
    for k, (t, z, cause) in enumerate(s.events):
        gap = t - times[k]
        tstar = hit_time(cycle, starts[k]).t
        if cause == BOUNDARY:
            assert abs(gap - tstar) <= 1e-9
        else:
            assert gap < tstar
        assert 0 < z < 1
    assert s.pstar == sum(c == BOUNDARY for _, _, c in s.events)
    assert 0 < s.pstar < len(s.events)


def test_open_loop_schedule(cycle):
    sched = OpenLoopStrategy({0: ControlPath.constant(0)}, default=ControlPath.constant(1))
    s = sample_trajectory(cycle, 0.5, sched, 0.6, seed=0)
    assert s.events[0][0] == pytest.approx(0.5) and s.events[0][2] == BOUNDARY


def test_jump_cap_marks_truncation(cycle_a0):
    s = sample_trajectory(cycle_a0, 0.5, ConstantStrategy(0), 100.0, n_max=10)
    assert s.truncated and len(s.events) == 10


def test_first_jump_law_ks(decay):
    strat = ConstantStrategy(0)
    draws = np.array([sample_jump_time(decay, 0.5, strat, rng=replication_rng(2024, i))[0]
                      for i in range(10_000)])
    res = stats.kstest(draws, "expon")
    assert res.pvalue > 0.01


def test_first_jump_law_affine_rate():
    # rate 0.5 + x along x + t: Lambda(t) = (0.5 + x) t + t^2 / 2 until exit at 1 - x
    text = fixture_path("cycle1d-a0").read_text().replace(
        "rate = constant value=0.0", "rate = affine intercept=0.5 slope=1.0")
    m = parse_model(text)
    x = 0.2
    draws = np.array([sample_jump_time(m, x, ConstantStrategy(0), rng=replication_rng(7, i))
                      for i in range(4000)], dtype=object)
    t = np.array([d[0] for d in draws], dtype=float)
    spont = np.array([d[1] == SPONTANEOUS for d in draws])
    lam_exit = 0.7 * 0.8 + 0.8 ** 2 / 2
    assert abs(np.mean(~spont) - math.exp(-lam_exit)) <= 4 * math.sqrt(math.exp(-lam_exit) / 4000)
    assert np.all(t[~spont] == pytest.approx(0.8, abs=1e-12))

    def cdf(s):
        return (1 - np.exp(-(0.7 * s + s * s / 2))) / (1 - math.exp(-lam_exit))
    assert stats.kstest(t[spont], cdf).pvalue > 0.01


def test_discounted_deterministic(cycle_a0):
    est = mc_discounted_cost(cycle_a0, 0.5, ConstantStrategy(0), 1.0, n_rep=5)
    assert abs(est.mean - cycle_a0_discounted(1.0)) <= 1e-3
    assert est.stderr <= 1e-12


def test_zero_costs_give_zero(free):
    assert mc_discounted_cost(free, 0.5, ConstantStrategy(1), 0.5, n_rep=10).mean == 0.0
    assert mc_average_cost(free, 0.5, ConstantStrategy(1), 50.0, n_rep=10).mean == 0.0


def test_optimal_policy_beats_single_actions(cycle):
    sol = value_iteration(cycle, alpha=0.5)
    opt = mc_discounted_cost(cycle, 0.5, FeedbackStrategy(sol.policy), 0.5, n_rep=200, seed=1)
    for a in (0, 1):
        single = mc_discounted_cost(cycle, 0.5, ConstantStrategy(a), 0.5, n_rep=200, seed=1)
        assert opt.mean <= single.mean + 3 * max(single.stderr, opt.stderr)
    assert abs(opt.mean - sol.value.evaluate(0.5)) <= 3 * opt.stderr + 1e-3 + 2e-3


def test_average_cost_deterministic_cycle(cycle_a0):
    est = mc_average_cost(cycle_a0, 0.5, ConstantStrategy(0), 100.0, n_rep=3)
    assert est.mean == pytest.approx(2.0, abs=1e-12) and est.stderr <= 1e-12


def test_decay_average_matches_renewal_reward(decay):
    est = mc_average_cost(decay, 0.5, ConstantStrategy(0), 200.0, n_rep=100, seed=2)
    assert abs(est.mean - decay_average()) <= 3 * est.stderr


def test_truncated_examples(cycle_a0, grid):
    s = ConstantStrategy(0)
    assert mc_truncated_cost(cycle_a0, 0.5, s, 1.0, 0, n_rep=3).mean == 0.0
    one = mc_truncated_cost(cycle_a0, 0.5, s, 1.0, 1, n_rep=3)
    assert one.mean == pytest.approx(cycle_a0_truncated_one_jump(1.0), abs=1e-12)
    # first iterate of the solver at a fine step bounds the one-jump cost from below
    v1 = apply_bellman(cycle_a0, grid, 1.0, 0.0, ValueField.constant(grid, 0.0, [1.0]), delta=1e-5)
    assert one.mean >= v1.evaluate(0.5) - 1e-6


def test_estimates_reproducible_across_threads(cycle):
    s = ConstantStrategy(1)
    a = mc_average_cost(cycle, 0.5, s, 50.0, n_rep=16, seed=9, threads=1)
    b = mc_average_cost(cycle, 0.5, s, 50.0, n_rep=16, seed=9, threads=4)
    c = mc_average_cost(cycle, 0.5, s, 50.0, n_rep=16, seed=9, threads=1)
    assert a == b == c
    d = mc_discounted_cost(cycle, 0.5, s, 0.5, n_rep=16, seed=9, threads=1)
    e = mc_discounted_cost(cycle, 0.5, s, 0.5, n_rep=16, seed=9, threads=3)
    assert d == e


def test_trajectory_csv(cycle_a0):
    s = sample_trajectory(cycle_a0, 0.5, ConstantStrategy(0), 1.0)
    lines = s.to_csv().splitlines()
    assert lines[0] == "n,T_n,Z_n,cause"
    assert lines[1] == "1,0.5,0.5,boundary"
