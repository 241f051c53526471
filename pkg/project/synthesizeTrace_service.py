from typing import List

from pydantic import BaseModel

from project.market_model import MarketSlot, TraceSynthSpec, synthesize_trace


class SynthesizeTraceResponse(BaseModel):
    on_demand_price: float
    slots: List[MarketSlot]


async def synthesizeTrace(request: TraceSynthSpec) -> SynthesizeTraceResponse:
    """
    Generates a deterministic synthetic trace. The same request always yields the same slots.

    Args:
        request (TraceSynthSpec): length, base levels, amplitudes, jitter and seed.

    Returns:
        SynthesizeTraceResponse: normalized slots (on-demand price 1).
    """
    trace = synthesize_trace(request)
    return SynthesizeTraceResponse(on_demand_price=trace.on_demand_price, slots=list(trace.slots))
