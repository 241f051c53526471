import logging
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Annotated, Deque, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from project.forecaster import Forecast
from project.job_model import (
    COMPLETION_TOLERANCE,
    IDLE,
    Allocation,
    JobSpec,
    Number,
    OverheadModel,
    ProgressState,
    ThroughputModel,
    UtilityTerms,
)
from project.optimizer import PlanSequence, WindowProblem, solve_window

logger = logging.getLogger(__name__)

POOL_OMEGAS = (1, 2, 3, 4, 5)

POOL_SIGMAS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

Aggregate = Literal["mean", "sum"]


class AhapSpec(BaseModel):
    """
    Committed-horizon policy: forecast window omega, commitment level commit (v), spot price threshold sigma.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["ahap"] = "ahap"
    omega: int = Field(ge=1, le=5)
    commit: int = Field(ge=1)
    sigma: float = Field(gt=0, le=1)

    @model_validator(mode="after")
    def _check_commit(self) -> "AhapSpec":
        if self.commit > self.omega:
            raise ValueError("commitment level must not exceed the prediction window")
        return self


class AhanpSpec(BaseModel):
    """
    Reactive policy driven by progress ratio, spot price ratio and availability change rate.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["ahanp"] = "ahanp"
    sigma: float = Field(gt=0, le=1)


class OdOnlySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["od"] = "od"


class MsuSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["msu"] = "msu"


class UpSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["up"] = "up"


PolicySpec = Annotated[
    Union[AhapSpec, AhanpSpec, OdOnlySpec, MsuSpec, UpSpec], Field(discriminator="kind")
]

policy_spec_adapter = TypeAdapter(PolicySpec)

_NUMBER = r"(\d+(?:\.\d*)?(?:[eE]-?\d+)?)"
_AHAP_RE = re.compile(rf"ahap:w=(\d+),v=(\d+),s={_NUMBER}")
_AHANP_RE = re.compile(rf"ahanp:s={_NUMBER}")
_SIMPLE = {"od": OdOnlySpec, "msu": MsuSpec, "up": UpSpec}


def format_policy(spec: PolicySpec) -> str:
    """Serializes a spec as `ahap:w=3,v=2,s=0.7`, `ahanp:s=0.5`, `od`, `msu` or `up`."""
    if isinstance(spec, AhapSpec):
        return f"ahap:w={spec.omega},v={spec.commit},s={spec.sigma!r}"
    if isinstance(spec, AhanpSpec):
        return f"ahanp:s={spec.sigma!r}"
    return spec.kind


def parse_policy(text: str) -> PolicySpec:
    """
    Parses the policy grammar produced by format_policy. Lowercase, no spaces.

    Raises:
        ValueError: the text does not match the grammar or violates a policy invariant.
    """
    if text in _SIMPLE:
        return _SIMPLE[text]()
    m = _AHAP_RE.fullmatch(text)
    if m:
        return AhapSpec(omega=int(m.group(1)), commit=int(m.group(2)), sigma=float(m.group(3)))
    m = _AHANP_RE.fullmatch(text)
    if m:
        return AhanpSpec(sigma=float(m.group(1)))
    raise ValueError(f"unrecognized policy spec {text!r}")


def build_policy_pool(
    omegas: Sequence[int] = POOL_OMEGAS,
    sigmas: Sequence[float] = POOL_SIGMAS,
    commit: Optional[int] = None,
    include_ahanp: bool = True,
) -> List[PolicySpec]:
    """
    AHAP specs sorted by (omega, commit, sigma), then AHANP specs sorted by sigma.
    The defaults give the 112-policy pool whose 1-based index 106 is `ahanp:s=0.3`.

    Args:
        omegas: prediction windows to include.
        sigmas: price thresholds to include.
        commit: if set, keep only AHAP specs with this commitment level.
        include_ahanp: append one AHANP spec per sigma.
    """
    pool: List[PolicySpec] = []
    for omega in sorted(omegas):
        for v in range(1, omega + 1):
            if commit is not None and v != commit:
                continue
            for sigma in sorted(sigmas):
                pool.append(AhapSpec(omega=omega, commit=v, sigma=sigma))
    if include_ahanp:
        pool.extend(AhanpSpec(sigma=sigma) for sigma in sorted(sigmas))
    return pool


@dataclass(frozen=True)
class Observation:
    """What a policy sees at job slot `slot` (1-based) before deciding."""

    slot: int
    spot_price: float
    spot_avail: int
    state: ProgressState


@dataclass
class AhapState:
    """The last `commit` window plans, keyed by the job slot they were made at."""

    commit: int
    plans: Deque[Tuple[int, PlanSequence]] = field(default_factory=deque)

    def __post_init__(self):
        self.plans = deque(self.plans, maxlen=self.commit)

    def push(self, origin: int, plan: PlanSequence) -> None:
        self.plans.append((origin, plan))

    def entries_for(self, slot: int) -> List[Allocation]:
        out = []
        for origin, plan in self.plans:
            offset = slot - origin
            if 0 <= offset < len(plan.allocations):
                out.append(plan.allocations[offset])
        return out


def _round_half_up_ratio(numerator: int, denominator: int) -> int:
    return (2 * numerator + denominator) // (2 * denominator)


def clamp_total(n_od: int, n_spot: int, job: JobSpec) -> Allocation:
    """
    Forces a nonzero total into [n_min, n_max]: raises with on-demand, lowers on-demand first, then spot.
    """
    total = n_od + n_spot
    if total == 0:
        return IDLE
    if total < job.n_min:
        n_od += job.n_min - total
    elif total > job.n_max:
        excess = total - job.n_max
        cut = min(excess, n_od)
        n_od -= cut
        n_spot -= excess - cut
    return Allocation(n_od=n_od, n_spot=n_spot)


def _spot_priority_plan(
    spec: AhapSpec, forecast: Forecast, horizon: int, job: JobSpec, terms: UtilityTerms
) -> PlanSequence:
    threshold = terms.num(spec.sigma) * terms.od_price
    allocs = []
    for tau in range(horizon + 1):
        price = terms.num(forecast.price_pred[tau])
        avail = forecast.avail_pred[tau]
        if price <= threshold and avail >= job.n_min:
            allocs.append(Allocation(n_od=0, n_spot=min(avail, job.n_max)))
        else:
            allocs.append(IDLE)
    return PlanSequence(allocations=tuple(allocs), objective=terms.zero)


def decide_ahap(
    spec: AhapSpec,
    state: AhapState,
    obs: Observation,
    forecast: Forecast,
    job: JobSpec,
    tp: ThroughputModel,
    ov: OverheadModel,
    od_price: float,
    exact: bool = False,
    aggregate: Aggregate = "mean",
) -> Allocation:
    """
    One slot of the committed-horizon policy.

    When progress already meets the reference trajectory at the end of the window, plans spot-only use of
    every predicted slot priced at or under sigma·p^o; otherwise solves the window problem. The executed
    decision aggregates the current slot's entries of the last `commit` plans (mean rounded half up, or their
    sum with aggregate="sum"), caps spot by observed availability and clamps the total.

    Args:
        spec (AhapSpec): omega, commit, sigma.
        state (AhapState): plan history; the new plan is pushed into it.
        obs (Observation): current job slot, observed market and progress.
        forecast (Forecast): index 0 is the current slot; must reach min(omega, deadline - slot).
        exact (bool): plan in rational arithmetic.
        aggregate (str): "mean" or "sum" over the stored plans.

    Returns:
        Allocation: decision for the current slot.
    """
    t = obs.slot
    horizon = min(spec.omega, job.deadline - t)
    if horizon < 0:
        raise ValueError(f"slot {t} is past the deadline {job.deadline}")
    if forecast.horizon < horizon:
        raise ValueError(f"forecast horizon {forecast.horizon} shorter than window {horizon}")
    terms = UtilityTerms.build(job, tp, ov, od_price, exact=exact)
    if terms.num(obs.state.progress) >= terms.expected_progress(t + spec.omega):
        plan = _spot_priority_plan(spec, forecast, horizon, job, terms)
    else:
        plan = solve_window(
            WindowProblem(
                start_slot=t,
                horizon=spec.omega,
                state=obs.state,
                forecast=forecast,
                job=job,
                tp=tp,
                ov=ov,
                od_price=od_price,
            ),
            exact=exact,
        )
    state.push(t, plan)
    entries = state.entries_for(t)
    sum_od = sum(a.n_od for a in entries)
    sum_spot = sum(a.n_spot for a in entries)
    if aggregate == "sum":
        n_od, n_spot = sum_od, sum_spot
    else:
        n_od = _round_half_up_ratio(sum_od, len(entries))
        n_spot = _round_half_up_ratio(sum_spot, len(entries))
    return clamp_total(n_od, min(n_spot, obs.spot_avail), job)


def _ahanp_total(
    z_hat: float, p_hat: float, n_hat: float, prev_total: int, avail: int, job: JobSpec
) -> int:
    if z_hat >= 1:
        if n_hat == 0:
            return 0
        if n_hat <= 0.5:
            return max(_round_half_up_ratio(prev_total, 2), job.n_min)
        if n_hat <= 1 or p_hat > 1:
            return prev_total
        return max(prev_total, avail)
    if math.isinf(n_hat):
        return job.n_min
    # Behind schedule with nothing running: doubling zero would idle forever.
    return 2 * prev_total if prev_total > 0 else job.n_min


def decide_ahanp(
    spec: AhanpSpec,
    obs: Observation,
    job: JobSpec,
    tp: ThroughputModel,
    ov: OverheadModel,
    od_price: float,
    prev_total: int,
    prev_avail: int,
) -> Allocation:
    """
    Reactive allocation from three ratios: progress vs. the reference trajectory, spot price vs. sigma·p^o,
    and availability vs. the previous slot. Spot fills the chosen total first, on-demand the rest.
    """
    t = obs.slot
    if t < 1:
        raise ValueError("job slots start at 1")
    z_exp = job.workload / job.deadline * (t - 1)
    z_hat = math.inf if z_exp == 0 else float(obs.state.progress) / z_exp
    p_hat = obs.spot_price / (spec.sigma * od_price)
    n_hat = math.inf if prev_avail == 0 else obs.spot_avail / prev_avail
    total = _ahanp_total(z_hat, p_hat, n_hat, prev_total, obs.spot_avail, job)
    if total > 0:
        total = min(max(total, job.n_min), job.n_max)
    n_spot = min(obs.spot_avail, total)
    return Allocation(n_od=total - n_spot, n_spot=n_spot)


def _min_total(terms: UtilityTerms, z: Number, prev: int, slots: int) -> int:
    """Smallest constant total that completes the job within `slots` slots; n_max if none does."""
    for n in range(terms.n_min, terms.n_max + 1):
        reach = z + terms.gain(n, prev) + (slots - 1) * terms.throughput(n)
        if terms.is_completed(reach):
            return n
    return terms.n_max


def _min_total_for_gain(terms: UtilityTerms, needed: Number, prev: int) -> int:
    for n in range(terms.n_min, terms.n_max + 1):
        if terms.gain(n, prev) >= needed:
            return n
    return terms.n_max


def decide_od_only(
    obs: Observation, job: JobSpec, tp: ThroughputModel, ov: OverheadModel, od_price: float
) -> Allocation:
    """
    Rents the smallest constant on-demand count that still finishes by the deadline, recomputed every slot.
    """
    terms = UtilityTerms.build(job, tp, ov, od_price)
    z = float(obs.state.progress)
    if terms.is_completed(z):
        return IDLE
    slots_left = job.deadline - obs.slot + 1
    if slots_left <= 0:
        return Allocation(n_od=job.n_max)
    return Allocation(n_od=_min_total(terms, z, obs.state.prev_total, slots_left))


def decide_msu(
    obs: Observation, job: JobSpec, tp: ThroughputModel, ov: OverheadModel, od_price: float
) -> Allocation:
    """
    Takes every available spot instance; tops up with on-demand only once the remaining work exceeds what
    n_max instances could still do after this slot.
    """
    terms = UtilityTerms.build(job, tp, ov, od_price)
    z = float(obs.state.progress)
    if terms.is_completed(z):
        return IDLE
    n_spot = min(obs.spot_avail, job.n_max)
    n_od = 0
    slack = (job.deadline - obs.slot) * terms.mu_up * terms.throughput(job.n_max)
    if not terms.is_completed(z + slack):
        slots_left = max(job.deadline - obs.slot + 1, 1)
        total = max(n_spot, _min_total(terms, z, obs.state.prev_total, slots_left))
        n_od = total - n_spot
    return clamp_total(n_od, n_spot, job)


def decide_up(
    obs: Observation, job: JobSpec, tp: ThroughputModel, ov: OverheadModel, od_price: float
) -> Allocation:
    """
    Holds the reference trajectory: spot when at least n_min are available, on-demand only when behind and
    spot is short. Instance counts include the reconfiguration loss of the current slot.
    """
    terms = UtilityTerms.build(job, tp, ov, od_price)
    z = float(obs.state.progress)
    if terms.is_completed(z):
        return IDLE
    needed = terms.expected_progress(obs.slot) - z
    behind = needed > COMPLETION_TOLERANCE
    prev = obs.state.prev_total
    if obs.spot_avail >= job.n_min:
        if not behind:
            return IDLE
        n = _min_total_for_gain(terms, needed, prev)
        return Allocation(n_od=0, n_spot=min(obs.spot_avail, n))
    if behind:
        return Allocation(n_od=_min_total_for_gain(terms, needed, prev))
    return IDLE


def spot_only_schedule(avails: Sequence[int], job: JobSpec) -> List[Allocation]:
    """Spot-priority without on-demand fallback: min(avail, n_max) whenever at least n_min are available."""
    return [
        Allocation(n_spot=min(a, job.n_max)) if a >= job.n_min else IDLE for a in avails
    ]


class PolicyController:
    """
    Owns the per-run state of one policy and dispatches each slot to its decision rule.
    """

    def __init__(
        self,
        spec: PolicySpec,
        job: JobSpec,
        tp: ThroughputModel,
        ov: OverheadModel,
        od_price: float,
        exact: bool = False,
        aggregate: Aggregate = "mean",
    ):
        self.spec = spec
        self.job = job
        self.tp = tp
        self.ov = ov
        self.od_price = od_price
        self.exact = exact
        self.aggregate = aggregate
        self.ahap_state = AhapState(commit=spec.commit) if isinstance(spec, AhapSpec) else None

    @property
    def needs_forecast(self) -> bool:
        return isinstance(self.spec, AhapSpec)

    def forecast_horizon(self, slot: int) -> int:
        if not isinstance(self.spec, AhapSpec):
            return 0
        return max(min(self.spec.omega, self.job.deadline - slot), 0)

    def decide(self, obs: Observation, forecast: Optional[Forecast] = None, prev_avail: int = 0) -> Allocation:
        spec = self.spec
        if isinstance(spec, AhapSpec):
            if forecast is None:
                raise ValueError("AHAP needs a forecast")
            return decide_ahap(
                spec,
                self.ahap_state,
                obs,
                forecast,
                self.job,
                self.tp,
                self.ov,
                self.od_price,
                exact=self.exact,
                aggregate=self.aggregate,
            )
        if isinstance(spec, AhanpSpec):
            return decide_ahanp(
                spec, obs, self.job, self.tp, self.ov, self.od_price, obs.state.prev_total, prev_avail
            )
        if isinstance(spec, OdOnlySpec):
            return decide_od_only(obs, self.job, self.tp, self.ov, self.od_price)
        if isinstance(spec, MsuSpec):
            return decide_msu(obs, self.job, self.tp, self.ov, self.od_price)
        return decide_up(obs, self.job, self.tp, self.ov, self.od_price)
