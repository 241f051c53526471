from importlib.metadata import PackageNotFoundError, version

from pydantic import BaseModel

from project.job_model import JobSpec, OverheadModel, ThroughputModel, UtilityTerms


class HealthCheckResponse(BaseModel):
    """
    Status of the scheduling API.
    """

    status: str
    message: str
    version: str


def _package_version() -> str:
    try:
        return version("spot-finetune-scheduler")
    except PackageNotFoundError:
        return "unknown"


async def getApiHealth() -> HealthCheckResponse:
    """
    Reports whether the API is up. Evaluates the utility of a trivial job as a smoke test of the numeric engine.

    Returns:
        HealthCheckResponse: "UP" when the smoke test passes, "DOWN" with the error otherwise.

    Example:
        response = await getApiHealth()
        > HealthCheckResponse(status="UP", message="Scheduler is running and accepting requests.", version=...)
    """
    try:
        job = JobSpec(workload=0)
        terms = UtilityTerms.build(job, ThroughputModel(), OverheadModel(), 1.0)
        if terms.utility(terms.zero, terms.zero) == job.value:
            return HealthCheckResponse(
                status="UP", message="Scheduler is running and accepting requests.", version=_package_version()
            )
        return HealthCheckResponse(
            status="UNKNOWN", message="Unable to determine the status.", version=_package_version()
        )
    except Exception as e:
        return HealthCheckResponse(status="DOWN", message=str(e), version=_package_version())
