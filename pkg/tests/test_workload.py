import pytest
from hypothesis import given, settings, strategies as st

from vlibsim.workload import (FOREGROUND, BACKGROUND, BatchMem, CpuHog, MemStride, Periodic,
                              ServiceJob, WorkloadCursor, WorkloadSpec, make_workload, step)


def loop_nest(array_bytes, stride, jump):
    """The benchmark's loop nest written out literally."""
    for j in range(0, jump, stride):
        for i in range(j, array_bytes, jump):
            yield i


class FixedBus:
    def __init__(self, latency):
        self.latency = latency
        self.issued = []

    def __call__(self, now):
        self.issued.append(now)
        return now + self.latency


@pytest.mark.parametrize("shape", [(6 << 20, 64, 8192), (1000, 4, 64), (4096, 64, 128)])
def test_mem_stride_addresses_follow_loop_nest(shape):
    wl = MemStride(*shape)
    expected = list(loop_nest(*shape))
    assert wl.writes_per_pass == len(expected)
    idx = list(range(0, len(expected), max(1, len(expected) // 500)))
    assert [wl.address_at(n) for n in idx] == [expected[n] for n in idx]
    assert wl.address_at(len(expected)) == expected[0]


def test_default_shape_touches_every_line_once_per_pass():
    wl = MemStride()
    assert wl.writes_per_pass == (6 << 20) // 64


def test_mem_stride_issues_one_miss_per_iteration():
    wl = MemStride(miss_interval=8)
    cur = WorkloadCursor(wl)
    bus = FixedBus(40)
    consumed, issued = step(cur, 480, FOREGROUND, bus)
    assert consumed == 480
    assert issued == 10
    assert bus.issued == [8 + 48 * k for k in range(10)]
    assert wl.iteration == 10
    assert cur.instructions_retired == 80
    assert cur.fg_instructions == 80


def test_cpu_hog_never_misses():
    cur = WorkloadCursor(CpuHog())
    consumed, issued = step(cur, 10_000, BACKGROUND, FixedBus(40))
    assert (consumed, issued) == (10_000, 0)
    assert cur.instructions_retired == 10_000
    assert cur.fg_instructions == 0


def test_batch_mem_in_background_counts_no_fg_inst():
    cur = WorkloadCursor(BatchMem(4))
    step(cur, 1000, BACKGROUND, FixedBus(10))
    assert cur.fg_instructions == 0
    assert cur.instructions_retired > 0


def test_periodic_job_time_constant_when_uncontended():
    wl = Periodic(period_cycles=1000, work_cycles=120, miss_interval=None)
    for k in range(3):
        wl.release(k * 1000)
        cur = WorkloadCursor(wl)
        cur.t_sync = k * 1000
        consumed, _ = step(cur, 1000, FOREGROUND, FixedBus(40))
        assert consumed == 120
    assert wl.samples == [120, 120, 120]


def test_periodic_job_waits_for_last_miss():
    wl = Periodic(period_cycles=1000, work_cycles=20, miss_interval=10)
    wl.release(0)
    cur = WorkloadCursor(wl)
    consumed, issued = step(cur, 1000, FOREGROUND, FixedBus(40))
    # 10 + 40 + 10 + 40: the job ends when the second miss returns
    assert issued == 2
    assert wl.samples == [100]
    assert consumed == 100


def test_periodic_sample_cap():
    wl = Periodic(100, 10, samples=2)
    assert wl.release(0) and wl.release(100)
    assert not wl.release(200)


def test_service_job_prefix_then_demand():
    job = ServiceJob(demand=25, miss_interval=10, prefix=7)
    chunks = []
    while (c := job.next_chunk(0)) is not None:
        chunks.append(c)
    assert chunks == [(7, False), (10, True), (10, True), (5, False), (0, False)]


def test_workload_params_validation():
    assert WorkloadSpec("mem_stride", {"stride": 64, "jump": 100}).validate()
    assert WorkloadSpec("mem_stride", {"stride": 0}).validate()
    assert WorkloadSpec("bogus").validate()
    assert WorkloadSpec("batch_mem", {"miss_interval": 0}).validate()
    assert WorkloadSpec("mem_stride", {}).validate() == []


def test_make_workload_converts_periods():
    wl = make_workload(WorkloadSpec("periodic", {"period_ms": 2, "work_cycles": 5,
                                                 "phase_ms": 0.5}), 1000)
    assert (wl.period_cycles, wl.phase_cycles) == (2000, 500)
    with pytest.raises(ValueError):
        make_workload(WorkloadSpec("nope"), 1)


def test_stepping_past_chunk_end_is_an_error():
    cur = WorkloadCursor(BatchMem(5))
    cur.load(0)
    with pytest.raises(RuntimeError):
        cur.advance(6, True, FixedBus(1))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 32), st.integers(1, 80), st.lists(st.integers(1, 400), min_size=1, max_size=12),
       st.lists(st.booleans(), min_size=12, max_size=12))
def test_instruction_accounting_is_exact(miss_interval, latency, grants, modes):
    """Retired instructions equal granted cycles minus stalled cycles."""
    cur = WorkloadCursor(BatchMem(miss_interval))
    bus = FixedBus(latency)
    total = 0
    for g, fg in zip(grants, modes):
        consumed, _ = step(cur, g, FOREGROUND if fg else BACKGROUND, bus)
        assert consumed == g
        total += g
    assert cur.instructions_retired + cur.stall_cycles == total
    assert cur.fg_instructions <= cur.instructions_retired
    assert cur.requests == len(bus.issued)
