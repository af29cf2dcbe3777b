import numpy as np
import pytest

from oracles import cycle_a0_discounted, decay_average
from pdmpctl import SweepDivergence, load_fixture
from pdmpctl.average import (SweepPoint, average_policy, boundedness_report, classify_residual,
                             drift_condition_check, optimality_residual, vanishing_sweep)
from pdmpctl.fields import FeedbackPolicy, ValueField
from pdmpctl.simulate import ConstantStrategy, mc_average_cost


def test_single_action_rho(sweep_a0):
    assert abs(sweep_a0.rho - 2.0) <= 1e-2
    assert sweep_a0.mc_check.mean == pytest.approx(2.0, abs=1e-12)


def test_single_action_trace_rises_to_two(sweep_a0):
    rhos = [p.rho for p in sweep_a0.sweep_trace]
    assert np.all(np.diff(rhos) > 0)
    assert max(rhos) <= 2.0 + 1e-3
    for p in sweep_a0.sweep_trace:
        assert abs(p.rho - p.alpha * cycle_a0_discounted(p.alpha)) <= 1e-3


def test_single_action_near_equality(sweep_a0):
    assert sweep_a0.residual_max <= 1e-3
    assert sweep_a0.residual_min >= -1e-2
    cls = classify_residual(sweep_a0.residual_field, 1e-2)
    assert cls["acoi"] and cls["acoe"]


def test_bias_normalized(sweep_a0, sweep_cycle):
    for sol in (sweep_a0, sweep_cycle):
        for h in sol.h_fields + [sol.h]:
            assert h.evaluate(sol.x0) == 0.0


def test_boundedness_single_action(sweep_a0):
    rep = sweep_a0.boundedness
    assert rep.C == pytest.approx(2.0, abs=1e-2)
    assert np.isfinite(rep.K_h) and np.all(np.isfinite(rep.b))
    assert not rep.blow_up


def test_boundedness_needs_two_points(sweep_a0):
    with pytest.raises(ValueError, match="≥2 points required"):
        boundedness_report(sweep_a0.sweep_trace[:1], sweep_a0.h_fields[:1])


def test_blowup_fixture_aborts():
    with pytest.raises(SweepDivergence) as info:
        vanishing_sweep(load_fixture("blowup"), mc_reps=0)
    assert info.value.report.blow_up


def test_two_actions_improve_on_single(sweep_cycle):
    assert sweep_cycle.rho <= 2.0 + 1e-2
    assert sweep_cycle.residual_max <= 1e-3


def test_abelian_bound_and_policy_optimality(cycle, sweep_cycle):
    sol = sweep_cycle
    for a in (0, 1):
        est = mc_average_cost(cycle, 0.5, ConstantStrategy(a), 200.0, n_rep=40, seed=4)
        assert all(p.rho <= est.mean + 3 * est.stderr for p in sol.sweep_trace)
    mc = sol.mc_check
    assert abs(mc.mean - sol.rho) <= 3 * mc.stderr + 1e-2


def test_decay_rho_matches_renewal_reward(sweep_decay):
    assert abs(sweep_decay.rho - decay_average()) <= 1e-3
    assert sweep_decay.residual_max <= 1e-3
    mc = sweep_decay.mc_check
    assert abs(mc.mean - sweep_decay.rho) <= 3 * mc.stderr + 1e-2


def test_residual_signs(cycle_a0, sweep_a0):
    grid = sweep_a0.h.grid
    zero = ValueField.constant(grid, 0.0, [1.0])
    assert optimality_residual(cycle_a0, grid, 0.0, zero).support_values.min() > 0
    bumped = optimality_residual(cycle_a0, grid, sweep_a0.rho + 1.0, sweep_a0.h)
    assert bumped.support_values.min() < 0


def test_average_policy_single_action(cycle_a0, sweep_a0):
    pol = average_policy(cycle_a0, sweep_a0.h.grid, sweep_a0.w, sweep_a0.h)
    assert np.all(pol.actions == 0)


def test_schedule_and_x0_checks(cycle_a0):
    with pytest.raises(ValueError):
        vanishing_sweep(cycle_a0, alpha_schedule=[0.1, 0.2], mc_reps=0)
    with pytest.raises(ValueError):
        vanishing_sweep(cycle_a0, x0=0.123, mc_reps=0)


def test_drift_bounded_bias(cycle_a0, sweep_a0):
    rep = drift_condition_check(cycle_a0, sweep_a0.policy, sweep_a0.h, [10, 100, 1000], n_rep=5)
    bound = float(np.abs(sweep_a0.h.support_values).max())
    for row in rep.rows:
        assert abs(row.mean) <= bound / row.horizon + 1e-12
    assert rep.vanishing


def test_drift_zero_and_time_linear(cycle, sweep_cycle):
    zero = drift_condition_check(cycle, sweep_cycle.policy, lambda x, t: 0.0, [5, 50], n_rep=5)
    assert all(r.mean == 0.0 for r in zero.rows)
    linear = drift_condition_check(cycle, sweep_cycle.policy, lambda x, t: t, [5, 50, 500], n_rep=5)
    assert all(r.mean == pytest.approx(1.0) for r in linear.rows)
    assert not linear.vanishing
