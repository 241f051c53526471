from typing import List, Optional

from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field, field_validator, model_validator

from project.config import ForecasterSection, ModelSection
from project.harness import JobResult, audit_result, run_job
from project.job_model import JobSpec
from project.market_model import SpotTrace, TraceSynthSpec, synthesize_trace
from project.policies import parse_policy


class TracePayload(BaseModel):
    """
    Market the job runs on: explicit price/availability series, or a synthetic trace specification.
    """

    prices: Optional[List[float]] = None
    avails: Optional[List[int]] = None
    synth: Optional[TraceSynthSpec] = None

    @model_validator(mode="after")
    def _check_source(self) -> "TracePayload":
        explicit = self.prices is not None or self.avails is not None
        if explicit == (self.synth is not None):
            raise ValueError("give either prices and avails, or synth")
        if explicit and (self.prices is None or self.avails is None):
            raise ValueError("prices and avails must be given together")
        return self

    def to_trace(self) -> SpotTrace:
        if self.synth is not None:
            return synthesize_trace(self.synth)
        return SpotTrace.from_series(self.prices, self.avails)


class SimulateJobRequest(BaseModel):
    """
    One policy on one job. start_slot is the trace index of job slot 1; earlier slots are forecaster history.
    """

    policy: str
    job: JobSpec = JobSpec()
    trace: TracePayload
    start_slot: int = Field(default=0, ge=0)
    model: ModelSection = ModelSection()
    forecaster: ForecasterSection = ForecasterSection()

    @field_validator("policy")
    @classmethod
    def _check_policy(cls, v: str) -> str:
        parse_policy(v)
        return v


class SimulateJobResponse(BaseModel):
    """
    The audited job record.
    """

    result: JobResult


def _simulate(request: SimulateJobRequest) -> JobResult:
    trace = request.trace.to_trace()
    model = request.model
    tp, ov = model.throughput(), model.overhead()
    result = run_job(
        request.policy,
        request.job,
        trace,
        request.forecaster,
        tp,
        ov,
        model.od_price,
        request.start_slot,
        exact=model.exact,
        aggregate=model.aggregate,
    )
    audit_result(result, request.job, trace, tp, ov, model.od_price)
    return result


async def simulateJob(request: SimulateJobRequest) -> SimulateJobResponse:
    """
    Runs the requested policy slot by slot on the given market and returns its utility, cost, progress and
    per-slot allocations. The simulation runs in a worker thread so the event loop stays responsive.

    Args:
        request (SimulateJobRequest): policy string, job, market and model parameters.

    Returns:
        SimulateJobResponse: the job record after the replay audit.

    Example:
        request = SimulateJobRequest(policy="od", trace=TracePayload(prices=[0.3] * 10, avails=[0] * 10))
        response = await simulateJob(request)
        > response.result.cost == 80.0 for the default job with mu = 1
    """
    result = await run_in_threadpool(_simulate, request)
    return SimulateJobResponse(result=result)
