from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from project.job_model import (
    IDLE,
    Allocation,
    JobSpec,
    OverheadModel,
    ProgressState,
    ThroughputModel,
    UtilityTerms,
    as_exact,
    effective_fraction,
    expected_progress,
    replay,
    step,
    throughput,
    tilde_value,
    utility,
    value_at,
)

JOB = JobSpec(workload=80, deadline=10, n_min=1, n_max=12, value=100, gamma=1.5)


def test_throughput():
    assert throughput(ThroughputModel(), 8) == 8
    assert throughput(ThroughputModel(), 0) == 0
    assert throughput(ThroughputModel(alpha=2, beta=1), 3) == 7
    with pytest.raises(ValueError):
        throughput(ThroughputModel(), -1)


@pytest.mark.parametrize("n_prev, n_now, expected", [(3, 5, 0.9), (5, 3, 0.95), (4, 4, 1)])
def test_effective_fraction(n_prev, n_now, expected):
    assert effective_fraction(OverheadModel(mu_up=0.9, mu_down=0.95), n_now, n_prev) == expected


def test_overhead_order_is_validated():
    with pytest.raises(ValueError):
        OverheadModel(mu_up=0.95, mu_down=0.9)


def test_job_bounds_are_validated():
    with pytest.raises(ValueError):
        JobSpec(n_min=5, n_max=4)
    with pytest.raises(ValueError):
        JobSpec(gamma=1.0)


def test_terms_reject_stalled_throughput():
    with pytest.raises(ValueError):
        UtilityTerms.build(JOB, ThroughputModel(alpha=1, beta=-2), OverheadModel(), 1.0)


@pytest.mark.parametrize("T, expected", [(10, 100), (12.5, 50), (15, 0), (20, 0), (3, 100)])
def test_value_at(T, expected):
    assert value_at(JOB, T) == expected


def test_value_at_exact_fraction():
    assert value_at(JOB, Fraction(25, 2)) == Fraction(50)


def test_value_at_continuity_and_monotonicity():
    d, gd = JOB.deadline, JOB.gamma * JOB.deadline
    assert value_at(JOB, d - 1e-9) == pytest.approx(value_at(JOB, d + 1e-9), abs=1e-6)
    assert value_at(JOB, gd - 1e-9) == pytest.approx(value_at(JOB, gd + 1e-9), abs=1e-6)
    grid = [0.5 + 0.25 * i for i in range(80)]
    values = [value_at(JOB, T) for T in grid]
    assert all(a >= b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("t, expected", [(5, 40), (0, 0), (12, 96)])
def test_expected_progress(t, expected):
    assert expected_progress(JOB, t) == expected


def test_tilde_value_examples():
    tp, ov = ThroughputModel(), OverheadModel(mu_up=0.9, mu_down=0.9)
    assert tilde_value(JOB, tp, ov, 1.0, 80) == 100
    assert tilde_value(JOB, tp, ov, 1.0, Fraction(71)) == Fraction(220, 3)
    assert tilde_value(JOB, tp, ov, 1.0, Fraction(0)) == Fraction(-800, 9)
    assert tilde_value(JOB, tp, ov, 1.0, 71.0) == pytest.approx(73.3333333333)


def test_tilde_value_is_nondecreasing_and_saturates():
    tp, ov = ThroughputModel(), OverheadModel()
    grid = [0.5 * i for i in range(200)]
    values = [tilde_value(JOB, tp, ov, 1.0, z) for z in grid]
    assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))
    assert all(v == JOB.value for z, v in zip(grid, values) if z >= JOB.workload)


def test_utility_examples():
    tp, ov = ThroughputModel(), OverheadModel(mu_up=1.0, mu_down=1.0)
    assert utility(JOB, tp, ov, 1.0, 80, 0) == 100
    assert utility(JOB, tp, ov, 1.0, 80, 80) == 20
    assert utility(JOB, tp, ov, 1.0, 0, 0) == tilde_value(JOB, tp, ov, 1.0, 0)


def test_step_idle_slot():
    state = ProgressState(t=3, progress=12.0, prev_total=4, accrued_cost=5.0)
    out = step(state, IDLE, 0.5, 1.0, ThroughputModel(), OverheadModel())
    assert (out.t, out.progress, out.prev_total, out.accrued_cost) == (4, 12.0, 0, 5.0)


def test_step_scale_out():
    out = step(ProgressState(), Allocation(n_spot=8), 0.5, 1.0, ThroughputModel(), OverheadModel(mu_up=0.9, mu_down=0.9))
    assert out.progress == pytest.approx(7.2)
    assert out.accrued_cost == pytest.approx(4.0)


def test_step_hold():
    state = ProgressState(t=1, progress=7.2, prev_total=8, accrued_cost=4.0)
    out = step(state, Allocation(n_od=2, n_spot=6), 0.5, 1.0, ThroughputModel(), OverheadModel())
    assert out.progress - state.progress == pytest.approx(8)
    assert out.accrued_cost - state.accrued_cost == pytest.approx(5)


def test_step_preserves_exact_arithmetic():
    out = step(ProgressState.initial(exact=True), Allocation(n_spot=8), 0.5, 1.0, ThroughputModel(), OverheadModel())
    assert out.progress == Fraction(36, 5)
    assert out.accrued_cost == Fraction(4)


def test_as_exact_uses_decimal_repr():
    assert as_exact(0.9) == Fraction(9, 10)
    assert as_exact(3) == Fraction(3)


def test_completion_tolerance_only_in_float_mode():
    ov = OverheadModel()
    assert UtilityTerms.build(JOB, ThroughputModel(), ov, 1.0).is_completed(80 - 1e-12)
    assert not UtilityTerms.build(JOB, ThroughputModel(), ov, 1.0, exact=True).is_completed(Fraction(80) - Fraction(1, 10**12))


allocations = st.lists(
    st.one_of(
        st.just((0, 0)),
        st.tuples(st.integers(0, 12), st.integers(0, 12)).filter(lambda a: 1 <= a[0] + a[1] <= 12),
    ),
    min_size=1,
    max_size=10,
)


@settings(max_examples=100, deadline=None)
@given(allocs=allocations, prices=st.lists(st.floats(0, 2), min_size=10, max_size=10))
def test_stepping_matches_replay(allocs, prices):
    tp, ov = ThroughputModel(alpha=1.5, beta=0.5), OverheadModel(mu_up=0.85, mu_down=0.95)
    state = ProgressState()
    for (n_od, n_spot), price in zip(allocs, prices):
        prev = state.progress
        state = step(state, Allocation(n_od=n_od, n_spot=n_spot), price, 1.0, tp, ov)
        assert state.progress >= prev
    terms = UtilityTerms.build(JOB, tp, ov, 1.0)
    z, cost = replay(terms, allocs, prices)
    assert z == pytest.approx(state.progress)
    assert cost == pytest.approx(state.accrued_cost)
    assert terms.utility(z, cost) == pytest.approx(utility(JOB, tp, ov, 1.0, state.progress, state.accrued_cost))
    if terms.is_completed(z):
        assert z >= JOB.workload - 1e-9
