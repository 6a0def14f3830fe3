import pytest
from hypothesis import given, settings, strategies as st

from vlibsim.engine import Engine, EventKind, SimulationError


def test_timer_fires_at_requested_time():
    eng = Engine()
    seen = []
    eng.schedule(100, EventKind.TIMER, lambda p: seen.append(eng.now))
    assert eng.run_until(1000) == 1
    assert seen == [100]
    assert eng.now == 1000


def test_simultaneous_events_dispatch_in_insertion_order():
    eng = Engine()
    seen = []
    for tag in "abc":
        eng.schedule(5, EventKind.TIMER, seen.append, tag)
    eng.run_until(5)
    assert seen == ["a", "b", "c"]


def test_schedule_in_past_is_rejected():
    eng = Engine()
    eng.run_until(10)
    with pytest.raises(SimulationError):
        eng.schedule(9, EventKind.TIMER, lambda p: None)


def test_cancel_semantics():
    eng = Engine()
    a = eng.schedule(5, EventKind.TIMER, lambda p: None)
    b = eng.schedule(6, EventKind.TIMER, lambda p: None)
    assert eng.cancel(a) is True
    assert eng.cancel(a) is False
    eng.run_until(10)
    assert eng.cancel(b) is False
    assert eng.cancel(12345) is False
    assert eng.dispatched == 1


def test_empty_queue_advances_clock():
    eng = Engine()
    assert eng.run_until(1000) == 0
    assert eng.now == 1000
    with pytest.raises(SimulationError):
        eng.run_until(999)


def test_handler_failure_carries_event():
    eng = Engine()

    def boom(_):
        raise ValueError("bad")

    eng.schedule(7, EventKind.IPI, boom, "payload")
    with pytest.raises(SimulationError) as info:
        eng.run_until(10)
    assert info.value.event.fire_at == 7
    assert info.value.event.kind is EventKind.IPI
    assert info.value.event.payload == "payload"


def test_trace_format_is_stable():
    eng = Engine(tracing=True)
    eng.emit(0, "vcpu1", "dispatch", mode="foreground", x=0.5)
    eng.emit(None, "monitor", "tick")
    assert eng.trace_lines() == [
        "0\t0\tvcpu1\tdispatch\tmode=foreground;x=0.500000000",
        "0\t-\tmonitor\ttick\t",
    ]


def test_rng_is_seeded_pcg64():
    a, b = Engine(seed=3), Engine(seed=3)
    assert a.rng.integers(0, 1 << 30, 5).tolist() == b.rng.integers(0, 1 << 30, 5).tolist()
    assert type(a.rng.bit_generator).__name__ == "PCG64"


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.booleans()), max_size=40),
       st.integers(0, 60))
def test_no_lost_events_and_monotone_clock(items, horizon):
    eng = Engine()
    seen = []
    ids = []
    for t, cancel in items:
        ids.append((eng.schedule(t, EventKind.TIMER, lambda p: seen.append(eng.now)), cancel))
    for eid, cancel in ids:
        if cancel:
            eng.cancel(eid)
    eng.run_until(horizon)
    assert seen == sorted(seen)
    assert eng.scheduled == eng.dispatched + eng.cancelled + eng.pending_count
