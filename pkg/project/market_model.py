import csv
import io
import logging
import math
from typing import BinaryIO, Optional, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from project.errors import TraceParseError, TraceRangeError, TraceStructureError

logger = logging.getLogger(__name__)

TRACE_HEADER = ("slot", "spot_price", "spot_avail")

DAILY_PERIOD_SLOTS = 48

DEFAULT_AVAIL_CAP = 16


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class MarketSlot(BaseModel):
    """
    Spot market state for one discrete slot. Prices are normalized so that the on-demand price is 1.
    """

    model_config = ConfigDict(frozen=True)

    slot_index: int = Field(ge=0)
    spot_price: float = Field(ge=0, allow_inf_nan=False)
    spot_avail: int = Field(ge=0)


class SpotTrace(BaseModel):
    """
    Contiguous per-slot series of spot price and availability, plus the fixed on-demand reference price.
    """

    model_config = ConfigDict(frozen=True)

    slots: Tuple[MarketSlot, ...] = ()
    on_demand_price: float = Field(default=1.0, gt=0)
    slot_minutes: int = Field(default=30, gt=0)

    @model_validator(mode="after")
    def _check_contiguous(self) -> "SpotTrace":
        for expected, slot in enumerate(self.slots):
            if slot.slot_index != expected:
                raise ValueError(
                    f"slot indices must be contiguous from 0; found {slot.slot_index} at position {expected}"
                )
        return self

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def prices(self) -> np.ndarray:
        return np.array([s.spot_price for s in self.slots], dtype=float)

    @property
    def avails(self) -> np.ndarray:
        return np.array([s.spot_avail for s in self.slots], dtype=np.int64)

    @classmethod
    def from_series(
        cls,
        prices,
        avails,
        on_demand_price: float = 1.0,
        slot_minutes: int = 30,
    ) -> "SpotTrace":
        """
        Builds a trace from parallel price and availability sequences, indexing slots from 0.
        """
        if len(prices) != len(avails):
            raise ValueError("price and availability series differ in length")
        slots = tuple(
            MarketSlot(slot_index=i, spot_price=float(p), spot_avail=int(a))
            for i, (p, a) in enumerate(zip(prices, avails))
        )
        return cls(slots=slots, on_demand_price=on_demand_price, slot_minutes=slot_minutes)


class TraceSynthSpec(BaseModel):
    """
    Parameters of a synthetic trace with a daily sinusoidal trend and relative per-slot jitter.
    """

    model_config = ConfigDict(frozen=True)

    length: int = Field(ge=1)
    base_avail: float = Field(default=6.0, ge=0)
    avail_amplitude: float = Field(default=0.0, ge=0)
    base_price: float = Field(default=0.5, gt=0)
    price_amplitude: float = Field(default=0.0, ge=0)
    jitter: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)


def load_trace(source: Union[BinaryIO, TextIO]) -> SpotTrace:
    """
    Parses a trace CSV with header `slot,spot_price,spot_avail`.

    Args:
        source: UTF-8 byte stream (or an already decoded text stream).

    Returns:
        SpotTrace: rows in file order, normalized on-demand price 1.

    Raises:
        TraceParseError: a row is malformed, non-numeric or negative. The error names the line.
        TraceStructureError: slot indices are not contiguous from 0.
    """
    data = source.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise TraceParseError(1, f"trace is not valid UTF-8: {e}") from e
    reader = csv.reader(io.StringIO(data))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
        raise TraceParseError(1, f"expected header {','.join(TRACE_HEADER)}, got {header!r}")
    slots = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != 3:
            raise TraceParseError(line, f"expected 3 fields, got {len(row)}")
        try:
            slot = int(row[0])
            price = float(row[1])
            avail = int(row[2])
        except ValueError as e:
            raise TraceParseError(line, f"non-numeric field: {e}") from e
        if slot < 0 or avail < 0 or not math.isfinite(price) or price < 0:
            raise TraceParseError(line, "negative or non-finite value")
        if slot != len(slots):
            raise TraceStructureError(
                f"slot index gap at line {line}: expected {len(slots)}, got {slot}"
            )
        slots.append(MarketSlot(slot_index=slot, spot_price=price, spot_avail=avail))
    logger.debug("Loaded trace with %d slots", len(slots))
    return SpotTrace(slots=tuple(slots))


def dump_trace(trace: SpotTrace, sink: TextIO) -> None:
    """
    Writes the trace in the CSV format read by load_trace. Prices use repr so they load back bit for bit.
    """
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for s in trace.slots:
        writer.writerow((s.slot_index, repr(s.spot_price), s.spot_avail))


def normalize_trace(
    raw: SpotTrace,
    od_reference_price: float,
    avail_scale: float,
    avail_cap: int = DEFAULT_AVAIL_CAP,
) -> SpotTrace:
    """
    Divides prices by the on-demand reference price and scales availability into [0, avail_cap].

    Args:
        raw: trace in provider units.
        od_reference_price: on-demand price in the same units as the raw spot prices.
        avail_scale: multiplier applied to availability before rounding (half up).
        avail_cap: upper clamp for the scaled availability.

    Returns:
        SpotTrace: normalized trace with on_demand_price = 1.
    """
    if od_reference_price <= 0:
        raise ValueError("od_reference_price must be positive")
    if avail_scale <= 0:
        raise ValueError("avail_scale must be positive")
    if avail_cap <= 0:
        raise ValueError("avail_cap must be positive")
    slots = tuple(
        MarketSlot(
            slot_index=s.slot_index,
            spot_price=s.spot_price / od_reference_price,
            spot_avail=min(max(round_half_up(s.spot_avail * avail_scale), 0), avail_cap),
        )
        for s in raw.slots
    )
    return SpotTrace(slots=slots, on_demand_price=1.0, slot_minutes=raw.slot_minutes)


def synthesize_trace(spec: TraceSynthSpec) -> SpotTrace:
    """
    Generates a deterministic trace with a 48-slot (24 h) sinusoidal trend on both series.
    Jitter is relative to the base level and drawn uniformly in [-jitter, +jitter].
    """
    rng = np.random.default_rng(spec.seed)
    phase = np.sin(2.0 * np.pi * np.arange(spec.length) / DAILY_PERIOD_SLOTS)
    avail_noise = rng.uniform(-1.0, 1.0, spec.length) * spec.jitter * spec.base_avail
    price_noise = rng.uniform(-1.0, 1.0, spec.length) * spec.jitter * spec.base_price
    avail = np.floor(spec.base_avail + spec.avail_amplitude * phase + avail_noise + 0.5)
    price = spec.base_price + spec.price_amplitude * phase + price_noise
    return SpotTrace.from_series(np.maximum(price, 0.0), np.maximum(avail, 0).astype(np.int64))


def window_trace(trace: SpotTrace, start: int, length: int) -> SpotTrace:
    """
    Returns slots start..start+length-1 re-indexed from 0.
    """
    if start < 0 or length < 0 or start + length > len(trace):
        raise TraceRangeError(
            f"window [{start}, {start + length}) outside trace of {len(trace)} slots"
        )
    return SpotTrace.from_series(
        trace.prices[start : start + length],
        trace.avails[start : start + length],
        on_demand_price=trace.on_demand_price,
        slot_minutes=trace.slot_minutes,
    )


def rescale_trace(
    trace: SpotTrace,
    price_mean: Optional[float] = None,
    avail_mean: Optional[float] = None,
    avail_cap: Optional[int] = None,
) -> SpotTrace:
    """
    Scales the price and/or availability series so their means hit the requested targets.
    A series whose current mean is zero is shifted instead of scaled.
    """
    prices = trace.prices.copy()
    avails = trace.avails.astype(float)
    if price_mean is not None:
        current = float(prices.mean()) if len(prices) else 0.0
        prices = prices * (price_mean / current) if current > 0 else prices + price_mean
    if avail_mean is not None:
        current = float(avails.mean()) if len(avails) else 0.0
        avails = avails * (avail_mean / current) if current > 0 else avails + avail_mean
    avails = np.maximum(np.floor(avails + 0.5), 0)
    if avail_cap is not None:
        avails = np.minimum(avails, avail_cap)
    return SpotTrace.from_series(
        np.maximum(prices, 0.0),
        avails.astype(np.int64),
        on_demand_price=trace.on_demand_price,
        slot_minutes=trace.slot_minutes,
    )
