from typing import List

from pydantic import BaseModel

from project.policies import build_policy_pool, format_policy


class PolicyEntry(BaseModel):
    index: int
    spec: str


class PolicyPoolResponse(BaseModel):
    """
    The default selection pool in index order (1-based, as reported by selection runs).
    """

    size: int
    policies: List[PolicyEntry]


async def getPolicyPool() -> PolicyPoolResponse:
    """
    Lists every policy of the default pool: AHAP over all prediction windows, commitment levels and price
    thresholds, followed by AHANP over the thresholds.

    Returns:
        PolicyPoolResponse: pool size and entries.

    Example:
        response = await getPolicyPool()
        > response.size == 112, response.policies[105].spec == "ahanp:s=0.3"
    """
    pool = build_policy_pool()
    return PolicyPoolResponse(
        size=len(pool),
        policies=[PolicyEntry(index=i + 1, spec=format_policy(p)) for i, p in enumerate(pool)],
    )
