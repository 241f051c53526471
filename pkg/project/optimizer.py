import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from project.errors import CapabilityError, TraceRangeError
from project.forecaster import Forecast
from project.job_model import (
    Allocation,
    JobSpec,
    Number,
    OverheadModel,
    ProgressState,
    ThroughputModel,
    UtilityTerms,
)
from project.market_model import SpotTrace

logger = logging.getLogger(__name__)

OFFLINE_MAX_DEADLINE = 8


@dataclass(frozen=True)
class WindowProblem:
    """
    Finite-window allocation problem solved at job slot `start_slot` (1-based) from `state`.
    The forecast's index 0 is slot `start_slot`; its origin is whatever index the predictor used.
    """

    start_slot: int
    horizon: int
    state: ProgressState
    forecast: Forecast
    job: JobSpec
    tp: ThroughputModel
    ov: OverheadModel
    od_price: float

    @property
    def effective_horizon(self) -> int:
        return min(self.horizon, self.job.deadline - self.start_slot)


@dataclass(frozen=True)
class PlanSequence:
    allocations: Tuple[Allocation, ...]
    objective: Number


def split_allocation(total: int, spot_price: Number, spot_avail: int, od_price: Number) -> Allocation:
    """
    Cost-minimal split of a total: as much spot as available when strictly cheaper than on-demand, else none.
    """
    n_spot = min(total, spot_avail) if spot_price < od_price else 0
    return Allocation(n_od=total - n_spot, n_spot=n_spot)


class _PlanSearch:
    """
    Depth-first enumeration of per-slot totals in {0} ∪ [n_min, n_max] with branch-and-bound.

    Two prefixes that reach the same (progress, previous total) at the same depth share every completion,
    so only the better prefix under (cost, instance-slots, on-demand slots) is expanded; the depth-first
    order visits lexicographically smaller prefixes first, which settles the remaining ties.
    """

    def __init__(self, terms: UtilityTerms, prices: Sequence[Number], avails: Sequence[int]):
        self.terms = terms
        self.horizon = len(prices)
        totals = [0] + list(range(terms.n_min, terms.n_max + 1))
        self.options: List[List[Tuple[int, int, int, Number]]] = []
        for price, avail in zip(prices, avails):
            row = []
            for n in totals:
                alloc = split_allocation(n, price, avail, terms.od_price)
                row.append((n, alloc.n_od, alloc.n_spot, terms.slot_cost(alloc.n_od, alloc.n_spot, price)))
            self.options.append(row)
        self.max_gain = max(terms.throughput(terms.n_max), terms.zero)
        self.nodes = 0

    def run(self, z0: Number, prev0: int) -> Tuple[Number, Tuple[int, ...]]:
        terms = self.terms
        memo = [dict() for _ in range(self.horizon)]
        best_key: Optional[tuple] = None
        best_seq: Tuple[int, ...] = ()

        def visit(i: int, z: Number, prev: int, cost: Number, inst: int, od: int, seq: Tuple[int, ...]):
            nonlocal best_key, best_seq
            self.nodes += 1
            if i == self.horizon or terms.is_completed(z):
                key = (cost - terms.tilde_value(z), cost, inst, od)
                if best_key is None or key < best_key:
                    best_key = key
                    best_seq = seq + (0,) * (self.horizon - i)
                return
            state = (z, prev)
            seen = memo[i].get(state)
            if seen is not None and (cost, inst, od) >= seen:
                return
            memo[i][state] = (cost, inst, od)
            if best_key is not None:
                bound = terms.tilde_value(z + (self.horizon - i) * self.max_gain) - cost
                if bound < -best_key[0]:
                    return
            for n, n_od, _, c in self.options[i]:
                visit(i + 1, z + terms.gain(n, prev), n, cost + c, inst + n, od + n_od, seq + (n,))

        visit(0, z0, prev0, terms.zero, 0, 0, ())
        return -best_key[0], best_seq

    def plan(self, seq: Tuple[int, ...]) -> Tuple[Allocation, ...]:
        allocs = []
        for row, n in zip(self.options, seq):
            _, n_od, n_spot, _ = next(opt for opt in row if opt[0] == n)
            allocs.append(Allocation(n_od=n_od, n_spot=n_spot))
        return tuple(allocs)


def _solve(terms: UtilityTerms, prices: Sequence[float], avails: Sequence[int], state: ProgressState) -> PlanSequence:
    search = _PlanSearch(terms, [terms.num(p) for p in prices], list(avails))
    objective, seq = search.run(terms.num(state.progress), state.prev_total)
    logger.debug("plan search over %d slots visited %d nodes", len(prices), search.nodes)
    return PlanSequence(allocations=search.plan(seq), objective=objective)


def solve_window(p: WindowProblem, exact: bool = False) -> PlanSequence:
    """
    Exact maximizer of the window objective: value of end-of-window progress minus window cost, over slots
    start_slot .. start_slot + min(horizon, deadline - start_slot).

    Args:
        p (WindowProblem): window, starting state and forecast.
        exact (bool): search in rational arithmetic.

    Returns:
        PlanSequence: one allocation per window slot and the window objective.

    Raises:
        ValueError: the window starts past the deadline or the forecast is shorter than the window.
    """
    horizon = p.effective_horizon
    if horizon < 0:
        raise ValueError(f"window at slot {p.start_slot} starts past deadline {p.job.deadline}")
    if p.forecast.horizon < horizon:
        raise ValueError(f"forecast horizon {p.forecast.horizon} shorter than window {horizon}")
    terms = UtilityTerms.build(p.job, p.tp, p.ov, p.od_price, exact=exact)
    return _solve(
        terms,
        p.forecast.price_pred[: horizon + 1],
        p.forecast.avail_pred[: horizon + 1],
        p.state,
    )


def solve_offline(
    trace: SpotTrace,
    job: JobSpec,
    tp: ThroughputModel,
    ov: OverheadModel,
    od_price: float,
    start_slot: int = 0,
) -> PlanSequence:
    """
    Offline optimum over the whole deadline with the true trace values, in exact rational arithmetic.
    Trace slot start_slot is job slot 1.

    Raises:
        CapabilityError: deadline beyond OFFLINE_MAX_DEADLINE slots.
        TraceRangeError: trace shorter than the job.
    """
    if job.deadline > OFFLINE_MAX_DEADLINE:
        raise CapabilityError(
            f"offline oracle supports deadlines up to {OFFLINE_MAX_DEADLINE} slots, got {job.deadline}"
        )
    end = start_slot + job.deadline
    if start_slot < 0 or end > len(trace):
        raise TraceRangeError(f"trace of {len(trace)} slots does not cover [{start_slot}, {end})")
    terms = UtilityTerms.build(job, tp, ov, od_price, exact=True)
    return _solve(
        terms,
        [s.spot_price for s in trace.slots[start_slot:end]],
        [s.spot_avail for s in trace.slots[start_slot:end]],
        ProgressState.initial(exact=True),
    )


def ahap_gap_bound(
    budgets: Sequence[float],
    avail_ranges: Sequence[float],
    sigma: float,
    od_price: float,
    deadline: int,
) -> float:
    """
    Upper bound on U(OPT) - U(AHAP) for commitment level v = len(budgets):
    (2/v)·Σ G_{k,d} + (σ·p^o·d/v)·Σ D_{k,σ}, with G the k-step prediction budgets and D the largest predicted
    availability priced below the threshold at each prediction level.
    """
    v = len(budgets)
    if v == 0 or len(avail_ranges) != v:
        raise ValueError("need one budget and one availability range per commitment level")
    return 2.0 / v * math.fsum(budgets) + sigma * od_price * deadline / v * math.fsum(avail_ranges)
