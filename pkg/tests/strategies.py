import itertools
from fractions import Fraction
from typing import Sequence, Tuple

from hypothesis import strategies as st

from project.job_model import JobSpec, OverheadModel, ThroughputModel, UtilityTerms, replay
from project.market_model import SpotTrace

PRICES = [0.2, 0.3, 0.5, 0.8, 1.0, 1.2]


@st.composite
def small_instances(draw, max_deadline: int = 5, max_parallelism: int = 4):
    """A short job, a matching trace and an overhead model, all small enough to enumerate."""
    d = draw(st.integers(1, max_deadline))
    n_min = draw(st.integers(1, 2))
    n_max = draw(st.integers(n_min, max_parallelism))
    job = JobSpec(
        workload=draw(st.integers(1, d * n_max)),
        deadline=d,
        n_min=n_min,
        n_max=n_max,
        value=draw(st.sampled_from([10, 50, 100])),
        gamma=draw(st.sampled_from([1.5, 2.0])),
    )
    prices = draw(st.lists(st.sampled_from(PRICES), min_size=d, max_size=d))
    avails = draw(st.lists(st.integers(0, 5), min_size=d, max_size=d))
    mu_up, mu_down = draw(st.sampled_from([(1.0, 1.0), (0.9, 0.9), (0.8, 0.95)]))
    return job, SpotTrace.from_series(prices, avails), OverheadModel(mu_up=mu_up, mu_down=mu_down)


def brute_force(
    job: JobSpec,
    tp: ThroughputModel,
    ov: OverheadModel,
    prices: Sequence[float],
    avails: Sequence[int],
    od_price: float = 1.0,
    any_split: bool = True,
) -> Fraction:
    """
    Best Ṽ(Z) - cost over every sequence of (n_od, n_spot) pairs (any_split) or every sequence of totals run
    on on-demand only, in exact arithmetic.
    """
    terms = UtilityTerms.build(job, tp, ov, od_price, exact=True)
    totals = [0] + list(range(job.n_min, job.n_max + 1))
    per_slot = []
    for avail in avails:
        if any_split:
            per_slot.append([(n - s, s) for n in totals for s in range(0, min(n, avail) + 1)])
        else:
            per_slot.append([(n, 0) for n in totals])
    best = None
    for seq in itertools.product(*per_slot):
        z, cost = replay(terms, seq, prices)
        objective = terms.tilde_value(z) - cost
        if best is None or objective > best:
            best = objective
    return best


def exact_utility(
    job: JobSpec,
    tp: ThroughputModel,
    ov: OverheadModel,
    allocations: Sequence[Tuple[int, int]],
    prices: Sequence[float],
    od_price: float = 1.0,
) -> Fraction:
    terms = UtilityTerms.build(job, tp, ov, od_price, exact=True)
    z, cost = replay(terms, allocations, prices)
    return terms.utility(z, cost)
