import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

Number = Union[float, Fraction]

COMPLETION_TOLERANCE = 1e-9


def as_exact(x: Real) -> Fraction:
    """
    Converts through the shortest decimal repr, so 0.9 becomes 9/10 rather than its binary expansion.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


class JobSpec(BaseModel):
    """
    A fine-tuning job: workload L in GPU-slot units, deadline d in slots, parallelism bounds and the value
    parameters of the completion-time value function.
    """

    model_config = ConfigDict(frozen=True)

    workload: float = Field(default=80.0, ge=0)
    deadline: int = Field(default=10, ge=1)
    n_min: int = Field(default=1, ge=1)
    n_max: int = Field(default=12, ge=1)
    value: float = Field(default=100.0, gt=0)
    gamma: float = Field(default=1.5, gt=1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "JobSpec":
        if self.n_min > self.n_max:
            raise ValueError(f"n_min ({self.n_min}) exceeds n_max ({self.n_max})")
        return self


class ThroughputModel(BaseModel):
    """
    Affine throughput law H(n) = alpha * n + beta for n > 0, H(0) = 0.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=1.0, gt=0)
    beta: float = 0.0


class OverheadModel(BaseModel):
    """
    Effective share of a slot spent computing: mu_up when scaling out, mu_down when scaling in.
    """

    model_config = ConfigDict(frozen=True)

    mu_up: float = Field(default=0.9, gt=0, le=1)
    mu_down: float = Field(default=0.9, gt=0, le=1)

    @model_validator(mode="after")
    def _check_order(self) -> "OverheadModel":
        if self.mu_up > self.mu_down:
            raise ValueError("mu_up must not exceed mu_down")
        return self


class Allocation(BaseModel):
    """
    Instances rented for one slot. The job runs in that slot iff total > 0.
    """

    model_config = ConfigDict(frozen=True)

    n_od: int = Field(default=0, ge=0)
    n_spot: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.n_od + self.n_spot

    def is_feasible_for(self, job: JobSpec) -> bool:
        return self.total == 0 or job.n_min <= self.total <= job.n_max


IDLE = Allocation()


@dataclass(frozen=True)
class ProgressState:
    """Progress of a single simulated job after `t` slots."""

    t: int = 0
    progress: Number = 0.0
    prev_total: int = 0
    accrued_cost: Number = 0.0

    @classmethod
    def initial(cls, exact: bool = False) -> "ProgressState":
        zero = Fraction(0) if exact else 0.0
        return cls(t=0, progress=zero, prev_total=0, accrued_cost=zero)


def _throughput(alpha: Number, beta: Number, n: int) -> Number:
    if n <= 0:
        return alpha * 0
    return alpha * n + beta


def _fraction(mu_up: Number, mu_down: Number, n_now: int, n_prev: int) -> Number:
    if n_now > n_prev:
        return mu_up
    if n_now < n_prev:
        return mu_down
    return mu_up * 0 + 1


def _value_at(value: Number, deadline: int, gamma: Number, T: Number) -> Number:
    if T <= deadline:
        return value
    if T < gamma * deadline:
        return value * (1 - (T - deadline) / ((gamma - 1) * deadline))
    return value * 0


@dataclass(frozen=True)
class UtilityTerms:
    """
    All job, throughput, overhead and price parameters converted to one numeric type.
    With exact=True every quantity is a Fraction and completion is tested without tolerance.
    """

    workload: Number
    deadline: int
    n_min: int
    n_max: int
    value: Number
    gamma: Number
    alpha: Number
    beta: Number
    mu_up: Number
    mu_down: Number
    od_price: Number
    exact: bool = False

    @classmethod
    def build(
        cls,
        job: JobSpec,
        tp: ThroughputModel,
        ov: OverheadModel,
        od_price: float,
        exact: bool = False,
    ) -> "UtilityTerms":
        if tp.alpha * job.n_min + tp.beta <= 0:
            raise ValueError("throughput model makes no progress at n_min")
        if od_price <= 0:
            raise ValueError("on-demand price must be positive")
        conv = as_exact if exact else float
        return cls(
            workload=conv(job.workload),
            deadline=job.deadline,
            n_min=job.n_min,
            n_max=job.n_max,
            value=conv(job.value),
            gamma=conv(job.gamma),
            alpha=conv(tp.alpha),
            beta=conv(tp.beta),
            mu_up=conv(ov.mu_up),
            mu_down=conv(ov.mu_down),
            od_price=conv(od_price),
            exact=exact,
        )

    def num(self, x: Real) -> Number:
        return as_exact(x) if self.exact else float(x)

    @property
    def zero(self) -> Number:
        return Fraction(0) if self.exact else 0.0

    def throughput(self, n: int) -> Number:
        return _throughput(self.alpha, self.beta, n)

    def fraction(self, n_now: int, n_prev: int) -> Number:
        return _fraction(self.mu_up, self.mu_down, n_now, n_prev)

    def gain(self, n_now: int, n_prev: int) -> Number:
        """Progress made in one slot running n_now instances after n_prev."""
        if n_now <= 0:
            return self.zero
        return self.fraction(n_now, n_prev) * self.throughput(n_now)

    def value_at(self, T: Number) -> Number:
        return _value_at(self.value, self.deadline, self.gamma, T)

    def expected_progress(self, t: Real) -> Number:
        return self.workload / self.deadline * t

    def is_completed(self, z: Number) -> bool:
        if self.exact:
            return z >= self.workload
        return z >= self.workload - COMPLETION_TOLERANCE

    def termination_slots(self, z_ddl: Number) -> Number:
        """Fractional slots the termination configuration needs to finish the remainder after the deadline."""
        if self.is_completed(z_ddl):
            return self.zero
        rate = self.mu_up * self.throughput(self.n_max)
        if rate <= 0:
            raise ValueError("termination configuration makes no progress")
        return (self.workload - z_ddl) / rate

    def tilde_value(self, z_ddl: Number) -> Number:
        if self.is_completed(z_ddl):
            return self.value
        t_rem = self.termination_slots(z_ddl)
        return self.value_at(self.deadline + t_rem) - t_rem * self.n_max * self.od_price

    def utility(self, z_ddl: Number, cost_ddl: Number) -> Number:
        return self.tilde_value(z_ddl) - cost_ddl

    def slot_cost(self, n_od: int, n_spot: int, spot_price: Number) -> Number:
        return n_od * self.od_price + n_spot * spot_price

    def step(self, state: ProgressState, alloc: Allocation, slot_price: Real) -> ProgressState:
        total = alloc.total
        return ProgressState(
            t=state.t + 1,
            progress=state.progress + self.gain(total, state.prev_total),
            prev_total=total,
            accrued_cost=state.accrued_cost + self.slot_cost(alloc.n_od, alloc.n_spot, self.num(slot_price)),
        )


def throughput(model: ThroughputModel, n: int) -> float:
    """
    H(n) = alpha * n + beta for n > 0 and 0 for an idle job.
    """
    if n < 0:
        raise ValueError("instance count must be nonnegative")
    return _throughput(model.alpha, model.beta, n)


def effective_fraction(model: OverheadModel, n_now: int, n_prev: int) -> float:
    """
    mu_up when the instance count grew, mu_down when it shrank, 1 when it held.
    """
    if n_now < 0 or n_prev < 0:
        raise ValueError("instance counts must be nonnegative")
    return _fraction(model.mu_up, model.mu_down, n_now, n_prev)


def value_at(job: JobSpec, T: Real) -> Number:
    """
    Value of completing the job at (possibly fractional) time T: full value up to the deadline, linear decay
    until gamma * deadline, zero afterwards.

    Args:
        job (JobSpec): supplies value, deadline and gamma.
        T (Real): completion time in slots, T > 0. Fractions are honoured.

    Returns:
        Number: value in monetary units, never negative.
    """
    if T <= 0:
        raise ValueError("completion time must be positive")
    if isinstance(T, Fraction):
        return _value_at(as_exact(job.value), job.deadline, as_exact(job.gamma), T)
    return _value_at(job.value, job.deadline, job.gamma, T)


def expected_progress(job: JobSpec, t: Real) -> float:
    """Linear reference trajectory (L/d)·t; defined past the deadline too."""
    if t < 0:
        raise ValueError("slot must be nonnegative")
    return job.workload / job.deadline * t


def tilde_value(
    job: JobSpec, tp: ThroughputModel, ov: OverheadModel, od_price: float, z_ddl: Real
) -> Number:
    """
    Value of reaching progress z_ddl by the deadline once the termination configuration (on-demand at n_max)
    finishes the remainder; its cost is absorbed here, so the result can be negative.
    """
    if z_ddl < 0:
        raise ValueError("progress must be nonnegative")
    terms = UtilityTerms.build(job, tp, ov, od_price, exact=isinstance(z_ddl, Fraction))
    return terms.tilde_value(terms.num(z_ddl))


def utility(
    job: JobSpec,
    tp: ThroughputModel,
    ov: OverheadModel,
    od_price: float,
    z_ddl: Real,
    cost_ddl: Real,
) -> Number:
    if cost_ddl < 0:
        raise ValueError("cost must be nonnegative")
    terms = UtilityTerms.build(job, tp, ov, od_price, exact=isinstance(z_ddl, Fraction))
    return terms.utility(terms.num(z_ddl), terms.num(cost_ddl))


def step(
    state: ProgressState,
    alloc: Allocation,
    slot_price: Real,
    od_price: Real,
    tp: ThroughputModel,
    ov: OverheadModel,
) -> ProgressState:
    """
    Processes one slot: progress grows by mu_t * H(total), cost by n_od * od_price + n_spot * slot_price.
    The numeric type of the state (float or Fraction) is preserved.
    """
    conv = as_exact if isinstance(state.progress, Fraction) else float
    total = alloc.total
    gain = conv(0)
    if total > 0:
        gain = _fraction(conv(ov.mu_up), conv(ov.mu_down), total, state.prev_total) * _throughput(
            conv(tp.alpha), conv(tp.beta), total
        )
    return replace(
        state,
        t=state.t + 1,
        progress=state.progress + gain,
        prev_total=total,
        accrued_cost=state.accrued_cost + alloc.n_od * conv(od_price) + alloc.n_spot * conv(slot_price),
    )


def replay(
    terms: UtilityTerms,
    allocations: Iterable[Tuple[int, int]],
    spot_prices: Sequence[Real],
) -> Tuple[Number, Number]:
    """
    Recomputes (Z^ddl, C^ddl) from a per-slot (n_od, n_spot) sequence, independently of any simulation state.
    """
    z = terms.zero
    cost = terms.zero
    prev = 0
    for (n_od, n_spot), price in zip(allocations, spot_prices):
        total = n_od + n_spot
        z += terms.gain(total, prev)
        cost += terms.slot_cost(n_od, n_spot, terms.num(price))
        prev = total
    return z, cost
