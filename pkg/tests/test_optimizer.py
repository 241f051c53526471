from fractions import Fraction

import pytest
from hypothesis import given, settings

from project.errors import CapabilityError, TraceRangeError
from project.forecaster import Forecast
from project.job_model import Allocation, JobSpec, OverheadModel, ProgressState, ThroughputModel, UtilityTerms
from project.market_model import SpotTrace
from project.optimizer import (
    OFFLINE_MAX_DEADLINE,
    WindowProblem,
    ahap_gap_bound,
    solve_offline,
    solve_window,
    split_allocation,
)
from tests.strategies import brute_force, small_instances


def _window(job, prices, avails, ov, start_slot=1, horizon=None, state=None, tp=None):
    horizon = len(prices) - 1 if horizon is None else horizon
    return WindowProblem(
        start_slot=start_slot,
        horizon=horizon,
        state=state or ProgressState.initial(exact=True),
        forecast=Forecast(origin_slot=0, horizon=len(prices) - 1, price_pred=tuple(prices), avail_pred=tuple(avails)),
        job=job,
        tp=tp or ThroughputModel(),
        ov=ov,
        od_price=1.0,
    )


def test_split_rule():
    assert split_allocation(5, 0.4, 3, 1.0) == Allocation(n_od=2, n_spot=3)
    assert split_allocation(2, 0.4, 3, 1.0) == Allocation(n_od=0, n_spot=2)
    assert split_allocation(5, 1.0, 3, 1.0) == Allocation(n_od=5, n_spot=0)


def test_window_example(no_overhead):
    job = JobSpec(workload=4, deadline=2, n_min=1, n_max=4, value=10, gamma=2)
    plan = solve_window(_window(job, [0.4, 0.4], [2, 2], no_overhead), exact=True)
    assert plan.allocations == (Allocation(n_spot=2), Allocation(n_spot=2))
    assert plan.objective == Fraction(42, 5)


def test_window_float_mode_agrees(no_overhead):
    job = JobSpec(workload=4, deadline=2, n_min=1, n_max=4, value=10, gamma=2)
    plan = solve_window(_window(job, [0.4, 0.4], [2, 2], no_overhead))
    assert plan.objective == pytest.approx(8.4)


def test_window_completed_job_idles(no_overhead):
    job = JobSpec(workload=4, deadline=3, n_min=1, n_max=4, value=10, gamma=2)
    state = ProgressState(t=1, progress=Fraction(4), prev_total=4, accrued_cost=Fraction(2))
    plan = solve_window(_window(job, [0.4, 0.4, 0.4], [2, 2, 2], no_overhead, start_slot=1, state=state), exact=True)
    assert all(a.total == 0 for a in plan.allocations)
    assert plan.objective == 10


def test_window_is_truncated_at_deadline(no_overhead):
    job = JobSpec(workload=4, deadline=3, n_min=1, n_max=4, value=10, gamma=2)
    plan = solve_window(_window(job, [0.4] * 4, [2] * 4, no_overhead, start_slot=2, horizon=3), exact=True)
    assert len(plan.allocations) == 2


def test_window_preconditions(no_overhead):
    job = JobSpec(workload=4, deadline=2, n_min=1, n_max=4, value=10, gamma=2)
    with pytest.raises(ValueError):
        solve_window(_window(job, [0.4, 0.4], [2, 2], no_overhead, start_slot=3, horizon=1))
    with pytest.raises(ValueError):
        solve_window(_window(job, [0.4], [2], no_overhead, start_slot=1, horizon=1))


def test_offline_cheap_spot_everywhere(toy_job, linear, no_overhead):
    trace = SpotTrace.from_series([0.3] * 5, [6] * 5)
    plan = solve_offline(trace, toy_job, linear, no_overhead, 1.0)
    assert plan.objective == 19
    assert all(a.n_od == 0 for a in plan.allocations)
    assert sum(a.n_spot for a in plan.allocations) == 20


def test_offline_toy_instance(toy_job, toy_trace, linear, no_overhead):
    plan = solve_offline(toy_trace, toy_job, linear, no_overhead, 1.0)
    assert plan.objective == Fraction(67, 5)
    assert sum(a.n_spot for a in plan.allocations) == 12


def test_offline_without_spot_matches_on_demand_enumeration(linear):
    job = JobSpec(workload=6, deadline=3, n_min=1, n_max=3, value=20, gamma=1.5)
    ov = OverheadModel(mu_up=0.9, mu_down=0.9)
    trace = SpotTrace.from_series([0.2] * 3, [0] * 3)
    plan = solve_offline(trace, job, linear, ov, 1.0)
    assert plan.objective == brute_force(job, linear, ov, [0.2] * 3, [0] * 3, any_split=False)
    assert all(a.n_spot == 0 for a in plan.allocations)


def test_offline_respects_start_slot(toy_job, linear, no_overhead):
    trace = SpotTrace.from_series([5.0, 5.0] + [0.3] * 5, [0, 0] + [6] * 5)
    assert solve_offline(trace, toy_job, linear, no_overhead, 1.0, start_slot=2).objective == 19


def test_offline_capability_bound(linear, no_overhead):
    job = JobSpec(workload=10, deadline=OFFLINE_MAX_DEADLINE + 1, n_min=1, n_max=2)
    trace = SpotTrace.from_series([0.5] * 20, [1] * 20)
    with pytest.raises(CapabilityError, match=str(OFFLINE_MAX_DEADLINE)):
        solve_offline(trace, job, linear, no_overhead, 1.0)


def test_offline_trace_too_short(toy_job, linear, no_overhead):
    with pytest.raises(TraceRangeError):
        solve_offline(SpotTrace.from_series([0.3] * 4, [6] * 4), toy_job, linear, no_overhead, 1.0)


@settings(max_examples=60, deadline=None)
@given(small_instances(max_deadline=2, max_parallelism=3))
def test_enumerating_totals_matches_every_split(instance):
    job, trace, ov = instance
    tp = ThroughputModel()
    prices, avails = list(trace.prices), [int(a) for a in trace.avails]
    plan = solve_window(_window(job, prices, avails, ov, horizon=job.deadline - 1), exact=True)
    assert plan.objective == brute_force(job, tp, ov, prices, avails)


@settings(max_examples=100, deadline=None)
@given(small_instances(max_deadline=5))
def test_full_window_equals_offline(instance):
    job, trace, ov = instance
    tp = ThroughputModel()
    window = solve_window(
        _window(job, list(trace.prices), [int(a) for a in trace.avails], ov, horizon=job.deadline - 1), exact=True
    )
    assert window.objective == solve_offline(trace, job, tp, ov, 1.0).objective


@settings(max_examples=60, deadline=None)
@given(small_instances(max_deadline=4))
def test_objective_bounds_and_availability_monotonicity(instance):
    job, trace, ov = instance
    tp = ThroughputModel()
    prices = list(trace.prices)
    avails = [int(a) for a in trace.avails]
    plan = solve_window(_window(job, prices, avails, ov, horizon=job.deadline - 1), exact=True)
    more = solve_window(_window(job, prices, [a + 1 for a in avails], ov, horizon=job.deadline - 1), exact=True)
    terms = UtilityTerms.build(job, tp, ov, 1.0, exact=True)
    assert terms.tilde_value(terms.zero) <= plan.objective <= terms.value
    assert more.objective >= plan.objective
    for alloc, avail in zip(plan.allocations, avails):
        assert alloc.is_feasible_for(job)
        assert alloc.n_spot <= avail


@settings(max_examples=30, deadline=None)
@given(small_instances(max_deadline=3))
def test_equal_price_never_prefers_spot(instance):
    job, trace, ov = instance
    prices = [1.0] * job.deadline
    plan = solve_offline(SpotTrace.from_series(prices, list(trace.avails)), job, ThroughputModel(), ov, 1.0)
    assert all(a.n_spot == 0 for a in plan.allocations)


def test_ahap_gap_bound():
    assert ahap_gap_bound([1.0, 2.0], [3.0, 4.0], sigma=0.5, od_price=1.0, deadline=10) == pytest.approx(20.5)
    with pytest.raises(ValueError):
        ahap_gap_bound([], [], 0.5, 1.0, 10)
