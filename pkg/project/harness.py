import csv
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from project.config import (
    ExperimentConfig,
    ExperimentKind,
    ForecasterSection,
    JobDistribution,
    PhaseSection,
    TraceSection,
)
from project.errors import AuditError, ConfigError, InsufficientHistoryError
from project.forecaster import (
    Forecast,
    NoiseSpec,
    predict_ar,
    predict_noisy_oracle,
    predict_perfect,
    predict_persistence,
    series_means,
)
from project.job_model import (
    JobSpec,
    OverheadModel,
    ProgressState,
    ThroughputModel,
    UtilityTerms,
    replay,
)
from project.market_model import (
    DEFAULT_AVAIL_CAP,
    SpotTrace,
    load_trace,
    normalize_trace,
    rescale_trace,
    synthesize_trace,
    window_trace,
)
from project.optimizer import solve_offline
from project.policies import (
    Aggregate,
    Observation,
    PolicyController,
    PolicySpec,
    clamp_total,
    format_policy,
    parse_policy,
)
from project.selector import (
    SelectionRun,
    export_history,
    normalize_utility,
    run_selection,
    utility_bounds,
)

logger = logging.getLogger(__name__)

REPLAY_TOLERANCE = 1e-9

DEFAULT_SWEEP_GRIDS: Dict[ExperimentKind, Tuple[float, ...]] = {
    ExperimentKind.SWEEP_DEADLINE: (6, 8, 10, 12, 14),
    ExperimentKind.SWEEP_OVERHEAD: (1.0, 0.95, 0.9, 0.8, 0.7),
    ExperimentKind.SWEEP_AVAIL: (2.0, 4.0, 6.0, 8.0, 10.0),
    ExperimentKind.SWEEP_PRICE: (0.2, 0.4, 0.6, 0.8),
}

SWEEP_PARAMS: Dict[ExperimentKind, str] = {
    ExperimentKind.SWEEP_DEADLINE: "deadline",
    ExperimentKind.SWEEP_OVERHEAD: "overhead",
    ExperimentKind.SWEEP_AVAIL: "avail",
    ExperimentKind.SWEEP_PRICE: "price",
}


class JobResult(BaseModel):
    """
    Outcome of one policy on one job. Allocations are per executed slot; slots after completion are absent.
    """

    model_config = ConfigDict(frozen=True)

    policy: str
    start_slot: int = Field(ge=0)
    utility_raw: float
    utility_norm: float = Field(ge=0, le=1)
    completion_slot: float
    cost: float
    z_ddl: float
    allocations: Tuple[Tuple[int, int], ...]


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    sweep_param: str
    sweep_value: float
    policy: str
    mean_utility: float
    stderr: float
    runs: int


class ImprovementRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    sweep_param: str
    sweep_value: float
    policy: str
    baseline: str
    improvement: float


class PhaseLeader(BaseModel):
    model_config = ConfigDict(frozen=True)

    phase: int
    start: int
    end: int
    leader: int
    policy: str
    weight: float


class OracleRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    slot: int
    n_od: int
    n_spot: int
    spot_price: float
    spot_avail: int
    objective: float


@dataclass(frozen=True)
class SelectionReport:
    pool: List[str]
    run: SelectionRun
    phase_leaders: List[PhaseLeader]


@dataclass(frozen=True)
class JobDraw:
    """A sampled job and where its first slot falls in the experiment trace."""

    job: JobSpec
    begin: int
    history: int

    def window(self, trace: SpotTrace) -> SpotTrace:
        return window_trace(trace, self.begin - self.history, self.history + self.job.deadline)


def make_forecast(
    forecaster: ForecasterSection,
    trace: SpotTrace,
    index: int,
    horizon: int,
    series_mean: Optional[Tuple[float, float]] = None,
) -> Forecast:
    """
    Forecast from trace index `index` over `horizon` further slots. The AR forecaster degrades to
    persistence while too little history has been observed. `series_mean` scales fixed-magnitude noise.
    """
    if forecaster.kind == "ar":
        try:
            return predict_ar(trace, index, horizon, order=forecaster.order)
        except InsufficientHistoryError:
            logger.debug("AR history too short at index %d, using persistence", index)
            return predict_persistence(trace, index, horizon)
    if forecaster.kind == "persistence":
        return predict_persistence(trace, index, horizon)
    if forecaster.kind == "perfect":
        return predict_perfect(trace, index, horizon)
    return predict_noisy_oracle(trace, index, horizon, forecaster.noise, series_mean)


def run_job(
    policy: Union[PolicySpec, str],
    job: JobSpec,
    trace: SpotTrace,
    forecaster: ForecasterSection,
    tp: ThroughputModel,
    ov: OverheadModel,
    od_price: float,
    start_slot: int,
    exact: bool = False,
    aggregate: Aggregate = "mean",
    series_mean: Optional[Tuple[float, float]] = None,
) -> JobResult:
    """
    Simulates one job slot by slot on the true trace.

    Job slot t (1-based) is trace index start_slot + t - 1. Each slot the policy observes the true price and
    availability, AHAP additionally receives a forecast, the decision is capped by the true availability and
    the job advances. The run stops as soon as the workload is done; an unfinished job is completed after
    the deadline by the termination configuration, which lands in the utility and the completion slot.

    Args:
        policy (Union[PolicySpec, str]): policy spec or its string form.
        job (JobSpec): the job.
        trace (SpotTrace): true market; earlier slots serve as forecaster history.
        forecaster (ForecasterSection): how AHAP forecasts are produced.
        tp (ThroughputModel): throughput model.
        ov (OverheadModel): reconfiguration overhead.
        od_price (float): on-demand price.
        start_slot (int): trace index of job slot 1.
        exact (bool): simulate in rational arithmetic.
        aggregate (str): AHAP plan aggregation, "mean" or "sum".
        series_mean (Optional[Tuple[float, float]]): price and availability means of the experiment trace
            for fixed-magnitude forecast noise; defaults to the means of `trace`.

    Returns:
        JobResult: utilities, cost, progress and the executed allocations.

    Raises:
        ConfigError: the trace ends before the job does.
    """
    spec = parse_policy(policy) if isinstance(policy, str) else policy
    controller = PolicyController(spec, job, tp, ov, od_price, exact=exact, aggregate=aggregate)
    terms = UtilityTerms.build(job, tp, ov, od_price, exact=exact)
    state = ProgressState.initial(exact=exact)
    allocations = []
    for t in range(1, job.deadline + 1):
        if terms.is_completed(state.progress):
            break
        index = start_slot + t - 1
        if index >= len(trace):
            raise ConfigError(
                f"trace exhausted: job slot {t} needs trace index {index}, trace has {len(trace)} slots"
            )
        slot = trace.slots[index]
        obs = Observation(slot=t, spot_price=slot.spot_price, spot_avail=slot.spot_avail, state=state)
        forecast = None
        if controller.needs_forecast:
            forecast = make_forecast(forecaster, trace, index, controller.forecast_horizon(t), series_mean)
        # Nothing is observed before the job starts, so slot 1 sees its availability as a fresh increase.
        prev_avail = trace.slots[index - 1].spot_avail if t > 1 else 0
        decided = controller.decide(obs, forecast, prev_avail)
        alloc = clamp_total(decided.n_od, min(decided.n_spot, slot.spot_avail), job)
        state = terms.step(state, alloc, slot.spot_price)
        allocations.append((alloc.n_od, alloc.n_spot))
    if terms.is_completed(state.progress):
        completion = float(state.t)
    else:
        completion = float(job.deadline + terms.termination_slots(state.progress))
    utility_raw = terms.utility(state.progress, state.accrued_cost)
    u_min, u_max = utility_bounds(job, od_price)
    result = JobResult(
        policy=format_policy(spec),
        start_slot=start_slot,
        utility_raw=float(utility_raw),
        utility_norm=normalize_utility(float(utility_raw), u_min, u_max),
        completion_slot=completion,
        cost=float(state.accrued_cost),
        z_ddl=float(state.progress),
        allocations=tuple(allocations),
    )
    logger.debug(
        "%s: utility %.4f cost %.4f completion %.3f",
        result.policy,
        result.utility_raw,
        result.cost,
        result.completion_slot,
    )
    return result


def audit_result(
    result: JobResult,
    job: JobSpec,
    trace: SpotTrace,
    tp: ThroughputModel,
    ov: OverheadModel,
    od_price: float,
) -> None:
    """
    Replays the allocations against the trace and checks the record.

    Raises:
        AuditError: spot use above the true availability, a total outside {0} ∪ [n_min, n_max], or a
            utility that differs from the replayed one by more than 1e-9.
    """
    start = result.start_slot
    for offset, (n_od, n_spot) in enumerate(result.allocations):
        avail = trace.slots[start + offset].spot_avail
        if n_spot > avail:
            raise AuditError(f"slot {offset + 1}: {n_spot} spot instances with {avail} available")
        total = n_od + n_spot
        if total != 0 and not job.n_min <= total <= job.n_max:
            raise AuditError(f"slot {offset + 1}: total {total} outside [{job.n_min}, {job.n_max}]")
    terms = UtilityTerms.build(job, tp, ov, od_price)
    prices = trace.prices[start : start + len(result.allocations)]
    z, cost = replay(terms, result.allocations, prices)
    expected = terms.utility(z, cost)
    if abs(expected - result.utility_raw) > REPLAY_TOLERANCE * max(1.0, abs(expected)):
        raise AuditError(f"replayed utility {expected!r} != recorded {result.utility_raw!r}")


def sample_jobs(dist: JobDistribution, count: int, seed: int) -> List[JobSpec]:
    return [dist.sample(np.random.default_rng([seed, k])) for k in range(count)]


def build_trace(section: TraceSection) -> SpotTrace:
    """The experiment's long trace: the CSV file if one is configured, otherwise the synthetic one."""
    if section.path is None:
        return synthesize_trace(section.synth)
    with open(section.path, "rb") as f:
        trace = load_trace(f)
    if section.normalize is not None:
        trace = normalize_trace(
            trace,
            section.normalize.od_reference_price,
            section.normalize.avail_scale,
            section.normalize.avail_cap,
        )
    logger.info("Loaded trace %s (%d slots)", section.path, len(trace))
    return trace


def draw_job(
    config: ExperimentConfig, trace: SpotTrace, k: int, deadline: Optional[int] = None
) -> JobDraw:
    """
    Job k of the experiment: drawn from the job distribution and placed at a random trace offset with up to
    `history` slots before it. Draws depend only on (seed, k), so every policy and sweep point sees the same jobs.
    """
    rng = np.random.default_rng([config.seed, k])
    job = config.job.sample(rng, deadline=deadline)
    history = config.trace.history
    if len(trace) < job.deadline:
        raise ConfigError(f"trace of {len(trace)} slots is shorter than deadline {job.deadline}")
    if config.trace.start is not None:
        begin = config.trace.start
        if begin + job.deadline > len(trace):
            raise ConfigError(f"start slot {begin} leaves fewer than {job.deadline} slots in the trace")
    else:
        low = min(history, len(trace) - job.deadline)
        begin = int(rng.integers(low, len(trace) - job.deadline + 1))
    return JobDraw(job=job, begin=begin, history=min(history, begin))


def job_forecaster(forecaster: ForecasterSection, noise: NoiseSpec, seed: int, k: int) -> ForecasterSection:
    """Gives job k its own noise stream so identical trace windows do not share prediction errors."""
    state = np.random.SeedSequence([noise.seed, seed, k]).generate_state(1, dtype=np.uint64)
    return forecaster.model_copy(update={"noise": noise.model_copy(update={"seed": int(state[0])})})


def _policy_specs(config: ExperimentConfig) -> List[PolicySpec]:
    return config.policies.specs()


def run_simulate(config: ExperimentConfig) -> List[JobResult]:
    """Runs every configured policy on `runs` sampled jobs and audits each record."""
    trace = build_trace(config.trace)
    specs = _policy_specs(config)
    tp, ov, model = config.model.throughput(), config.model.overhead(), config.model
    series_mean = series_means(trace)
    logger.info("simulate: %d policies x %d jobs", len(specs), config.runs)
    results = []
    for r in range(config.runs):
        draw = draw_job(config, trace, r)
        window = draw.window(trace)
        forecaster = job_forecaster(config.forecaster, config.forecaster.noise, config.seed, r)
        for spec in specs:
            result = run_job(
                spec,
                draw.job,
                window,
                forecaster,
                tp,
                ov,
                model.od_price,
                draw.history,
                exact=model.exact,
                aggregate=model.aggregate,
                series_mean=series_mean,
            )
            audit_result(result, draw.job, window, tp, ov, model.od_price)
            results.append(result)
    return results


def _sweep_point(
    kind: ExperimentKind, value: float, trace: SpotTrace, ov: OverheadModel
) -> Tuple[SpotTrace, OverheadModel, Optional[int]]:
    if kind is ExperimentKind.SWEEP_DEADLINE:
        if value != int(value) or value < 1:
            raise ConfigError(f"deadline sweep value {value} is not a positive integer")
        return trace, ov, int(value)
    if kind is ExperimentKind.SWEEP_OVERHEAD:
        return trace, OverheadModel(mu_up=value, mu_down=value), None
    if kind is ExperimentKind.SWEEP_AVAIL:
        return rescale_trace(trace, avail_mean=value, avail_cap=DEFAULT_AVAIL_CAP), ov, None
    return rescale_trace(trace, price_mean=value), ov, None


def run_sweep(config: ExperimentConfig, kind: Optional[ExperimentKind] = None) -> List[SweepRow]:
    """
    Mean normalized utility and its standard error per (sweep value, policy) over `sweep.runs` seeded jobs.
    Run r uses the same job and trace offset at every sweep value and for every policy.

    Args:
        config (ExperimentConfig): experiment; its kind selects the swept parameter unless `kind` is given.
        kind (Optional[ExperimentKind]): one of the sweep kinds.

    Returns:
        List[SweepRow]: rows ordered by sweep value, then policy in configured order.
    """
    kind = kind or config.kind
    if kind not in SWEEP_PARAMS:
        raise ConfigError(f"experiment kind {kind.value} is not a sweep")
    values = config.sweep.values or list(DEFAULT_SWEEP_GRIDS[kind])
    base = build_trace(config.trace)
    specs = _policy_specs(config)
    tp, model = config.model.throughput(), config.model
    runs = config.sweep.runs
    logger.info("%s sweep: %d values x %d policies x %d runs", SWEEP_PARAMS[kind], len(values), len(specs), runs)
    rows = []
    for value in values:
        trace, ov, deadline = _sweep_point(kind, value, base, config.model.overhead())
        series_mean = series_means(trace)
        scores = np.empty((len(specs), runs))
        for r in range(runs):
            draw = draw_job(config, trace, r, deadline=deadline)
            window = draw.window(trace)
            forecaster = job_forecaster(config.forecaster, config.forecaster.noise, config.seed, r)
            for m, spec in enumerate(specs):
                scores[m, r] = run_job(
                    spec,
                    draw.job,
                    window,
                    forecaster,
                    tp,
                    ov,
                    model.od_price,
                    draw.history,
                    exact=model.exact,
                    aggregate=model.aggregate,
                    series_mean=series_mean,
                ).utility_norm
        for m, spec in enumerate(specs):
            stderr = float(scores[m].std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
            rows.append(
                SweepRow(
                    sweep_param=SWEEP_PARAMS[kind],
                    sweep_value=float(value),
                    policy=format_policy(spec),
                    mean_utility=float(scores[m].mean()),
                    stderr=stderr,
                    runs=runs,
                )
            )
        logger.info("%s=%s done", SWEEP_PARAMS[kind], value)
    return rows


def improvement_table(rows: Sequence[SweepRow], reference: str) -> List[ImprovementRow]:
    """
    Relative gain (ref - other) / |other| of the reference policy's mean utility over each other policy,
    per sweep point.
    """
    by_point: Dict[Tuple[str, float], Dict[str, float]] = {}
    for row in rows:
        by_point.setdefault((row.sweep_param, row.sweep_value), {})[row.policy] = row.mean_utility
    out = []
    for (param, value), means in by_point.items():
        if reference not in means:
            raise ValueError(f"policy {reference!r} missing at {param}={value}")
        ref = means[reference]
        for policy, other in means.items():
            if policy == reference:
                continue
            if other == 0:
                gain = 0.0 if ref == 0 else math.copysign(math.inf, ref)
            else:
                gain = (ref - other) / abs(other)
            out.append(
                ImprovementRow(
                    sweep_param=param, sweep_value=value, policy=reference, baseline=policy, improvement=gain
                )
            )
    return out


def _check_phases(phases: Sequence[PhaseSection]) -> List[PhaseSection]:
    if not phases:
        raise ConfigError("phase list is empty")
    ordered = sorted(phases, key=lambda p: p.start)
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.start < prev.end:
            raise ConfigError(
                f"phases [{prev.start}, {prev.end}) and [{nxt.start}, {nxt.end}) overlap"
            )
    return ordered


def _phase_of(phases: Sequence[PhaseSection], k: int) -> int:
    """Index of the latest phase starting at or before k; the first phase covers anything earlier."""
    current = 0
    for i, phase in enumerate(phases):
        if phase.start <= k:
            current = i
    return current


def _run_selection_with(
    config: ExperimentConfig, K: int, noise_at: Callable[[int], NoiseSpec]
) -> Tuple[List[PolicySpec], SelectionRun]:
    trace = build_trace(config.trace)
    specs = _policy_specs(config)
    tp, ov, model = config.model.throughput(), config.model.overhead(), config.model
    draws = [draw_job(config, trace, k) for k in range(K)]
    series_mean = series_means(trace)
    windows: Dict[int, SpotTrace] = {}
    forecasters: Dict[int, ForecasterSection] = {}

    def scorer(k: int, job: JobSpec, m: int) -> float:
        if k not in windows:
            windows.clear()
            forecasters.clear()
            windows[k] = draws[k].window(trace)
            forecasters[k] = job_forecaster(config.forecaster, noise_at(k), config.seed, k)
        return run_job(
            specs[m],
            job,
            windows[k],
            forecasters[k],
            tp,
            ov,
            model.od_price,
            draws[k].history,
            exact=model.exact,
            aggregate=model.aggregate,
            series_mean=series_mean,
        ).utility_norm

    logger.info("selection: %d policies x %d jobs", len(specs), K)
    run = run_selection(
        len(specs),
        [d.job for d in draws],
        scorer,
        eta=config.select.eta,
        seed=config.seed,
    )
    return specs, run


def run_select(config: ExperimentConfig) -> SelectionReport:
    """Online selection over `select.jobs` jobs with the configured forecaster noise throughout."""
    specs, run = _run_selection_with(config, config.select.jobs, lambda k: config.forecaster.noise)
    pool = [format_policy(s) for s in specs]
    leader = run.leader()
    summary = PhaseLeader(
        phase=0,
        start=0,
        end=run.K,
        leader=leader + 1,
        policy=pool[leader],
        weight=float(run.final_weights[leader]),
    )
    return SelectionReport(pool=pool, run=run, phase_leaders=[summary])


def run_adapt_phases(config: ExperimentConfig) -> SelectionReport:
    """
    Online selection whose forecaster noise switches at the configured iteration boundaries. The weights
    carry over across boundaries. Reports the argmax policy at the end of every phase.

    Raises:
        ConfigError: the phase list is empty or two phases overlap.
    """
    phases = _check_phases(config.phases)
    K = max(p.end for p in phases)
    specs, run = _run_selection_with(config, K, lambda k: phases[_phase_of(phases, k)].noise)
    pool = [format_policy(s) for s in specs]
    leaders = []
    for i, phase in enumerate(phases):
        w = run.weights[phase.end] if phase.end < K else run.final_weights
        best = int(np.argmax(w))
        leaders.append(
            PhaseLeader(
                phase=i,
                start=phase.start,
                end=phase.end,
                leader=best + 1,
                policy=pool[best],
                weight=float(w[best]),
            )
        )
        logger.info("phase %d [%d, %d): leader %s (w=%.4f)", i, phase.start, phase.end, pool[best], w[best])
    return SelectionReport(pool=pool, run=run, phase_leaders=leaders)


def run_oracle(config: ExperimentConfig) -> List[OracleRow]:
    """Offline optimum for job 0 of the experiment, one row per job slot."""
    trace = build_trace(config.trace)
    draw = draw_job(config, trace, 0)
    model = config.model
    plan = solve_offline(
        trace, draw.job, model.throughput(), model.overhead(), model.od_price, start_slot=draw.begin
    )
    logger.info("oracle objective %s", plan.objective)
    return [
        OracleRow(
            slot=t + 1,
            n_od=a.n_od,
            n_spot=a.n_spot,
            spot_price=trace.slots[draw.begin + t].spot_price,
            spot_avail=trace.slots[draw.begin + t].spot_avail,
            objective=float(plan.objective),
        )
        for t, a in enumerate(plan.allocations)
    ]


def _cell(value) -> object:
    if isinstance(value, (tuple, list)):
        return json.dumps(value)
    return value


def write_rows(rows: Sequence[BaseModel], sink: TextIO, fmt: str = "csv") -> None:
    """Writes pydantic rows as CSV (header from the first row's fields) or JSON lines."""
    if fmt == "jsonl":
        for row in rows:
            sink.write(row.model_dump_json() + "\n")
        return
    if not rows:
        return
    fields = list(type(rows[0]).model_fields)
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        data = row.model_dump()
        writer.writerow([_cell(data[f]) for f in fields])


def write_history(report: SelectionReport, sink: TextIO, fmt: str = "csv") -> None:
    """
    Per-iteration weights (the heatmap source): JSON lines from export_history, or a wide CSV with one
    weight column per pool index.
    """
    if fmt == "jsonl":
        export_history(report.run, sink)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["k", "chosen", "expected_utility"] + [f"w_{m + 1}" for m in range(len(report.pool))])
    expected = report.run.expected_utilities
    for k, (w, chosen) in enumerate(zip(report.run.weights, report.run.chosen)):
        writer.writerow([k, chosen, float(expected[k])] + [float(x) for x in w])
