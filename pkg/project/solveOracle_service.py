from typing import List, Tuple

from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field

from project.config import ModelSection
from project.job_model import JobSpec
from project.optimizer import solve_offline
from project.simulateJob_service import TracePayload


class SolveOracleRequest(BaseModel):
    """
    Offline problem: job, market and the trace index of job slot 1.
    """

    job: JobSpec
    trace: TracePayload
    start_slot: int = Field(default=0, ge=0)
    model: ModelSection = ModelSection()


class SolveOracleResponse(BaseModel):
    """
    Optimal allocations with the objective both as a float and as an exact fraction string.
    """

    objective: float
    objective_exact: str
    allocations: List[Tuple[int, int]]


def _solve(request: SolveOracleRequest) -> SolveOracleResponse:
    model = request.model
    plan = solve_offline(
        request.trace.to_trace(),
        request.job,
        model.throughput(),
        model.overhead(),
        model.od_price,
        start_slot=request.start_slot,
    )
    return SolveOracleResponse(
        objective=float(plan.objective),
        objective_exact=str(plan.objective),
        allocations=[(a.n_od, a.n_spot) for a in plan.allocations],
    )


async def solveOracle(request: SolveOracleRequest) -> SolveOracleResponse:
    """
    Computes the offline optimum with full knowledge of the market, in exact arithmetic.

    Args:
        request (SolveOracleRequest): job, market and model parameters.

    Returns:
        SolveOracleResponse: allocations per job slot and the optimal utility.

    Raises:
        CapabilityError: the deadline is longer than the oracle supports.
    """
    return await run_in_threadpool(_solve, request)
