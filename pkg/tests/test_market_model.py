import io
import math

import pytest
from hypothesis import given, settings, strategies as st

from project.errors import TraceParseError, TraceRangeError, TraceStructureError
from project.market_model import (
    MarketSlot,
    SpotTrace,
    TraceSynthSpec,
    dump_trace,
    load_trace,
    normalize_trace,
    rescale_trace,
    synthesize_trace,
    window_trace,
)


def _load(text: str) -> SpotTrace:
    return load_trace(io.BytesIO(text.encode("utf-8")))


def test_load_trace_maps_fields():
    trace = _load("slot,spot_price,spot_avail\n0,0.55,7\n1,0.6,3\n")
    assert trace.slots[0] == MarketSlot(slot_index=0, spot_price=0.55, spot_avail=7)
    assert len(trace) == 2
    assert trace.on_demand_price == 1.0
    assert trace.slot_minutes == 30


def test_load_trace_header_only_is_empty():
    assert len(_load("slot,spot_price,spot_avail\n")) == 0


def test_load_trace_accepts_text_stream():
    trace = load_trace(io.StringIO("slot,spot_price,spot_avail\n0,0.5,2\n"))
    assert trace.slots[0].spot_avail == 2


def test_load_trace_gap_is_structural_error():
    with pytest.raises(TraceStructureError):
        _load("slot,spot_price,spot_avail\n0,0.5,1\n2,0.5,1\n")


@pytest.mark.parametrize(
    "body, line",
    [
        ("0,0.5,1\n1,abc,1\n", 3),
        ("0,-0.5,1\n", 2),
        ("0,0.5,-1\n", 2),
        ("0,0.5\n", 2),
        ("0,nan,1\n", 2),
    ],
)
def test_load_trace_malformed_row_names_line(body, line):
    with pytest.raises(TraceParseError) as exc:
        _load("slot,spot_price,spot_avail\n" + body)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_load_trace_wrong_header():
    with pytest.raises(TraceParseError) as exc:
        _load("time,price,avail\n0,0.5,1\n")
    assert exc.value.line == 1


def test_spot_trace_rejects_noncontiguous_slots():
    with pytest.raises(ValueError):
        SpotTrace(slots=(MarketSlot(slot_index=1, spot_price=0.5, spot_avail=1),))


def test_normalize_trace_examples():
    raw = SpotTrace.from_series([1.2, 1.2, 1.2], [400, 4000, 0], on_demand_price=2.0)
    norm = normalize_trace(raw, od_reference_price=2.0, avail_scale=0.01, avail_cap=16)
    assert norm.slots[0].spot_price == pytest.approx(0.6)
    assert [s.spot_avail for s in norm.slots] == [4, 16, 0]
    assert norm.on_demand_price == 1.0


def test_normalize_trace_rounds_half_up():
    raw = SpotTrace.from_series([0.5, 0.5], [3, 5])
    norm = normalize_trace(raw, 1.0, 0.5)
    assert [s.spot_avail for s in norm.slots] == [2, 3]


def test_normalize_trace_is_idempotent_at_unit_scale():
    raw = SpotTrace.from_series([1.5, 3.0, 0.7], [120, 900, 35])
    once = normalize_trace(raw, 3.0, 0.02, 16)
    assert normalize_trace(once, 1.0, 1.0, 16) == once


@pytest.mark.parametrize("bad", [dict(od_reference_price=0, avail_scale=1), dict(od_reference_price=1, avail_scale=0)])
def test_normalize_trace_preconditions(bad):
    with pytest.raises(ValueError):
        normalize_trace(SpotTrace.from_series([0.5], [1]), **bad)


def test_synthesize_constant_trace():
    trace = synthesize_trace(TraceSynthSpec(length=3, base_avail=6, base_price=0.5))
    assert [(s.spot_avail, s.spot_price) for s in trace.slots] == [(6, 0.5)] * 3


def test_synthesize_is_deterministic():
    spec = TraceSynthSpec(length=200, base_avail=6, avail_amplitude=3, base_price=0.5, price_amplitude=0.2, jitter=0.3, seed=42)
    assert synthesize_trace(spec) == synthesize_trace(spec)
    other = synthesize_trace(spec.model_copy(update={"seed": 43}))
    assert other != synthesize_trace(spec)


def test_synthesize_clamps_price_at_zero():
    trace = synthesize_trace(TraceSynthSpec(length=96, base_price=0.1, price_amplitude=0.5))
    assert min(trace.prices) == 0.0
    assert all(p >= 0 for p in trace.prices)


def test_synthesize_daily_period():
    trace = synthesize_trace(TraceSynthSpec(length=97, base_avail=6, avail_amplitude=4, base_price=0.5))
    assert trace.slots[12].spot_avail == 10
    assert trace.slots[36].spot_avail == 2
    assert trace.slots[0].spot_avail == trace.slots[48].spot_avail == trace.slots[96].spot_avail


@settings(max_examples=50, deadline=None)
@given(
    length=st.integers(min_value=1, max_value=150),
    base_avail=st.floats(min_value=0, max_value=20),
    avail_amplitude=st.floats(min_value=0, max_value=20),
    base_price=st.floats(min_value=0.01, max_value=2),
    price_amplitude=st.floats(min_value=0, max_value=2),
    jitter=st.floats(min_value=0, max_value=1),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_synthesized_slots_are_valid(length, base_avail, avail_amplitude, base_price, price_amplitude, jitter, seed):
    trace = synthesize_trace(
        TraceSynthSpec(
            length=length,
            base_avail=base_avail,
            avail_amplitude=avail_amplitude,
            base_price=base_price,
            price_amplitude=price_amplitude,
            jitter=jitter,
            seed=seed,
        )
    )
    assert len(trace) == length
    for i, slot in enumerate(trace.slots):
        assert slot.slot_index == i
        assert slot.spot_avail >= 0
        assert slot.spot_price >= 0 and math.isfinite(slot.spot_price)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False),
            st.integers(min_value=0, max_value=10_000),
        ),
        max_size=40,
    )
)
def test_dump_then_load_is_identity(rows):
    trace = SpotTrace.from_series([p for p, _ in rows], [a for _, a in rows])
    sink = io.StringIO()
    dump_trace(trace, sink)
    assert "\r" not in sink.getvalue()
    assert _load(sink.getvalue()) == trace


def test_window_trace_reindexes():
    trace = SpotTrace.from_series([0.1, 0.2, 0.3, 0.4], [1, 2, 3, 4])
    window = window_trace(trace, 1, 2)
    assert [s.slot_index for s in window.slots] == [0, 1]
    assert list(window.prices) == [0.2, 0.3]
    assert list(window.avails) == [2, 3]


def test_window_trace_out_of_range():
    trace = SpotTrace.from_series([0.1, 0.2], [1, 2])
    with pytest.raises(TraceRangeError):
        window_trace(trace, 1, 2)


def test_rescale_trace_hits_price_mean():
    trace = SpotTrace.from_series([0.2, 0.4, 0.6], [2, 4, 6])
    scaled = rescale_trace(trace, price_mean=0.8)
    assert scaled.prices.mean() == pytest.approx(0.8)
    assert list(scaled.avails) == [2, 4, 6]


def test_rescale_trace_avail_mean_and_cap():
    trace = SpotTrace.from_series([0.5] * 3, [2, 4, 6])
    scaled = rescale_trace(trace, avail_mean=8.0, avail_cap=10)
    assert list(scaled.avails) == [4, 8, 10]


def test_rescale_trace_shifts_all_zero_series():
    trace = SpotTrace.from_series([0.5] * 2, [0, 0])
    assert list(rescale_trace(trace, avail_mean=3.0).avails) == [3, 3]
