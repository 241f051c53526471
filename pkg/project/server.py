import logging

import project.getApiHealth_service
import project.getPolicyPool_service
import project.simulateJob_service
import project.solveOracle_service
import project.synthesizeTrace_service
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from project.errors import SchedulerError
from project.market_model import TraceSynthSpec

logger = logging.getLogger(__name__)

app = FastAPI(
    title="spot-finetune-scheduler",
    description="Simulate deadline-aware allocation of on-demand and spot GPU instances to fine-tuning jobs.",
)


def _error_response(e: Exception) -> JSONResponse:
    status_code = 422 if isinstance(e, (SchedulerError, ValidationError)) else 500
    return JSONResponse(content={"error": str(e)}, status_code=status_code)


@app.post(
    "/simulate",
    response_model=project.simulateJob_service.SimulateJobResponse,
)
async def api_post_simulateJob(
    request: project.simulateJob_service.SimulateJobRequest,
) -> project.simulateJob_service.SimulateJobResponse | JSONResponse:
    """
    Runs one policy on one job over the submitted market and returns the audited job record.
    """
    try:
        res = await project.simulateJob_service.simulateJob(request)
        return res
    except Exception as e:
        logger.exception("Error processing request")
        return _error_response(e)


@app.post(
    "/oracle",
    response_model=project.solveOracle_service.SolveOracleResponse,
)
async def api_post_solveOracle(
    request: project.solveOracle_service.SolveOracleRequest,
) -> project.solveOracle_service.SolveOracleResponse | JSONResponse:
    """
    Offline optimum of a short job with the whole market known in advance.
    """
    try:
        res = await project.solveOracle_service.solveOracle(request)
        return res
    except Exception as e:
        logger.exception("Error processing request")
        return _error_response(e)


@app.post(
    "/traces/synthesize",
    response_model=project.synthesizeTrace_service.SynthesizeTraceResponse,
)
async def api_post_synthesizeTrace(
    request: TraceSynthSpec,
) -> project.synthesizeTrace_service.SynthesizeTraceResponse | JSONResponse:
    """
    Deterministic synthetic spot trace.
    """
    try:
        res = await project.synthesizeTrace_service.synthesizeTrace(request)
        return res
    except Exception as e:
        logger.exception("Error processing request")
        return _error_response(e)


@app.get(
    "/policies",
    response_model=project.getPolicyPool_service.PolicyPoolResponse,
)
async def api_get_getPolicyPool() -> project.getPolicyPool_service.PolicyPoolResponse | JSONResponse:
    """
    The default policy pool used by online selection.
    """
    try:
        res = await project.getPolicyPool_service.getPolicyPool()
        return res
    except Exception as e:
        logger.exception("Error processing request")
        return _error_response(e)


@app.get(
    "/health",
    response_model=project.getApiHealth_service.HealthCheckResponse,
)
async def api_get_getApiHealth() -> project.getApiHealth_service.HealthCheckResponse | JSONResponse:
    """
    Liveness of the scheduling API.
    """
    try:
        res = await project.getApiHealth_service.getApiHealth()
        return res
    except Exception as e:
        logger.exception("Error processing request")
        return _error_response(e)
