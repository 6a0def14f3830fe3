"""Synthetic workloads and the cursor that steps them.

A workload is a stream of *chunks*: ``(instructions, miss_after)``. The
cursor retires one instruction per non-stalled cycle; when a chunk ends with
a miss it issues a blocking DRAM request and stalls until completion.
``instructions=None`` means an unbounded compute chunk (a CPU hog).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Optional

Chunk = tuple  # (instructions | None, miss_after)

FOREGROUND = "foreground"
BACKGROUND = "background"


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("mem_stride", "periodic", "batch_mem", "cpu_hog")

    def validate(self) -> list[str]:
        errors = []
        p = self.params
        if self.kind not in self.KINDS:
            return [f"unknown workload kind {self.kind!r}"]
        if self.kind == "mem_stride":
            stride, jump = p.get("stride", 64), p.get("jump", 8192)
            if stride <= 0 or jump <= 0:
                errors.append("mem_stride: stride and jump must be positive")
            elif jump % stride:
                errors.append("mem_stride: jump must be a multiple of stride")
            if p.get("array_bytes", 6 << 20) <= 0:
                errors.append("mem_stride: array_bytes must be positive")
        mi = p.get("miss_interval")
        if mi is not None and mi <= 0:
            errors.append(f"{self.kind}: miss_interval must be positive")
        return errors


class Workload:
    kind = "none"
    line_bytes = 64

    def next_chunk(self, now: int) -> Optional[Chunk]:
        raise NotImplementedError

    def on_issue(self) -> None:
        pass


class CpuHog(Workload):
    kind = "cpu_hog"

    def next_chunk(self, now):
        return (None, False)


class BatchMem(Workload):
    """Endless loop of ``miss_interval`` instructions followed by one DRAM miss."""

    kind = "batch_mem"

    def __init__(self, miss_interval: int = 8):
        self.miss_interval = miss_interval

    def next_chunk(self, now):
        return (self.miss_interval, True)


class MemStride(Workload):
    """The m_jump micro-benchmark.

    Each iteration writes one word and jumps ``jump`` bytes forward, walking
    every ``stride``-sized line of the array once per pass. Every write is a
    DRAM miss; ``miss_interval`` is the instruction count of one iteration.
    """

    kind = "mem_stride"

    def __init__(self, array_bytes: int = 6 << 20, stride: int = 64,
                 jump: int = 8192, miss_interval: int = 8):
        self.array_bytes = array_bytes
        self.stride = stride
        self.jump = jump
        self.miss_interval = miss_interval
        self.line_bytes = stride
        self.iteration = 0
        starts = range(0, jump, stride)
        counts = [max(0, -(-(array_bytes - j) // jump)) for j in starts]
        self._offsets = [0]
        for c in counts:
            self._offsets.append(self._offsets[-1] + c)
        self._starts = list(starts)

    @property
    def writes_per_pass(self) -> int:
        return self._offsets[-1]

    def address_at(self, n: int) -> int:
        """Byte offset written by iteration ``n`` (passes repeat)."""
        n %= self.writes_per_pass
        outer = bisect.bisect_right(self._offsets, n) - 1
        return self._starts[outer] + (n - self._offsets[outer]) * self.jump

    def next_chunk(self, now):
        return (self.miss_interval, True)

    def on_issue(self):
        self.iteration += 1


class Periodic(Workload):
    """Jobs of ``work_cycles`` instructions released every ``period_cycles``.

    With a finite ``miss_interval`` every full block of that many
    instructions ends with a DRAM miss. A job completes when its last
    instruction retired and its last miss returned.
    """

    kind = "periodic"

    def __init__(self, period_cycles: int, work_cycles: int,
                 miss_interval: Optional[int] = None, phase_cycles: int = 0,
                 samples: Optional[int] = None):
        self.period_cycles = period_cycles
        self.work_cycles = work_cycles
        self.miss_interval = miss_interval
        self.phase_cycles = phase_cycles
        self.max_jobs = samples
        self.released = 0
        self.releases: list = []
        self.samples: list = []
        self._left = 0
        self._active = False
        self._marked = False

    def release(self, now: int) -> bool:
        """Queue a job released at ``now``; False once the sample budget is spent."""
        if self.max_jobs is not None and self.released >= self.max_jobs:
            return False
        self.released += 1
        self.releases.append(now)
        return True

    @property
    def backlog(self) -> int:
        return len(self.releases) - (1 if self._active else 0)

    def next_chunk(self, now):
        if self._active:
            if self._left > 0:
                return self._carve()
            if not self._marked:
                # end marker: the cursor holds it until the last miss returns
                self._marked = True
                return (0, False)
            self.samples.append(now - self.releases.pop(0))
            self._active = False
        if not self.releases:
            return None
        self._active = True
        self._marked = False
        self._left = self.work_cycles
        return self._carve()

    def _carve(self):
        m = self.miss_interval
        if m is not None and self._left >= m:
            self._left -= m
            return (m, True)
        chunk, self._left = self._left, 0
        return (chunk, False)


class ServiceJob(Workload):
    """Server-side work for one vLib request.

    ``prefix`` cycles of plain compute (channel mapping) run first and are
    not counted as service; then ``demand`` instructions with an optional
    ``miss_interval``.
    """

    kind = "service"

    def __init__(self, demand: int, miss_interval: Optional[int] = None, prefix: int = 0):
        self.demand = demand
        self.miss_interval = miss_interval
        self.prefix = prefix
        self._prefix_left = prefix
        self._left = demand
        self.finished = False
        self.in_prefix = prefix > 0

    def next_chunk(self, now):
        if self._prefix_left:
            chunk, self._prefix_left = self._prefix_left, 0
            return (chunk, False)
        self.in_prefix = False
        m = self.miss_interval
        if self._left == 0:
            if self.finished:
                return None
            self.finished = True
            return (0, False)
        if m is not None and self._left >= m:
            self._left -= m
            return (m, True)
        chunk, self._left = self._left, 0
        return (chunk, False)


def make_workload(spec: WorkloadSpec, cycles_per_ms: int) -> Workload:
    p = dict(spec.params)
    if spec.kind == "cpu_hog":
        return CpuHog()
    if spec.kind == "batch_mem":
        return BatchMem(p.get("miss_interval", 8))
    if spec.kind == "mem_stride":
        return MemStride(p.get("array_bytes", 6 << 20), p.get("stride", 64),
                         p.get("jump", 8192), p.get("miss_interval", 8))
    if spec.kind == "periodic":
        if "period_ms" in p:
            period = int(round(p["period_ms"] * cycles_per_ms))
        else:
            period = p["period_cycles"]
        phase = int(round(p.get("phase_ms", 0) * cycles_per_ms))
        return Periodic(period, p["work_cycles"], p.get("miss_interval"), phase,
                        p.get("samples"))
    raise ValueError(f"unknown workload kind {spec.kind!r}")


class WorkloadCursor:
    """Position of a thread in its workload stream.

    ``t_sync`` is the last instant the cursor was accounted while running;
    ``stall_until`` the completion of the most recent DRAM request.
    """

    __slots__ = ("workload", "left", "miss_after", "stall_until", "t_sync",
                 "instructions_retired", "fg_instructions", "requests",
                 "stall_cycles", "idle", "cache_bytes")

    def __init__(self, workload: Optional[Workload]):
        self.workload = workload
        self.left: Optional[int] = 0
        self.miss_after = False
        self.stall_until = 0
        self.t_sync = 0
        self.instructions_retired = 0
        self.fg_instructions = 0
        self.requests = 0
        self.stall_cycles = 0
        self.cache_bytes = 0
        self.idle = True

    def load(self, now: int) -> bool:
        """Pull the next chunk; returns False when the workload has no work."""
        if self.workload is None:
            self.idle = True
            return False
        chunk = self.workload.next_chunk(now)
        if chunk is None:
            self.idle = True
            return False
        self.left, self.miss_after = chunk
        self.idle = False
        return True

    def next_event(self, now: int) -> Optional[int]:
        if self.idle or self.left is None:
            return None
        return max(now, self.stall_until) + self.left

    def advance(self, now: int, foreground: bool,
                issue: Callable[[int], int]) -> tuple[int, int]:
        """Account running time ``[t_sync, now)``; issue the miss if a chunk ends.

        ``now`` must not lie beyond :meth:`next_event`. Returns
        ``(compute_cycles, issued_requests)``.
        """
        if self.idle:
            self.t_sync = now
            return 0, 0
        t0 = self.t_sync
        stall = min(now, self.stall_until) - t0
        if stall < 0:
            stall = 0
        compute = now - t0 - stall
        if self.left is not None:
            if compute > self.left:
                raise RuntimeError(
                    f"cursor stepped past its chunk end ({compute} > {self.left})")
            self.left -= compute
        self.instructions_retired += compute
        if foreground:
            self.fg_instructions += compute
        self.stall_cycles += stall
        self.t_sync = now
        issued = 0
        while self.left == 0:
            if self.miss_after:
                self.stall_until = issue(now)
                self.miss_after = False
                self.requests += 1
                self.cache_bytes += self.workload.line_bytes
                self.workload.on_issue()
                issued += 1
            elif self.stall_until > now:
                # an empty chunk (job end) waits for the outstanding miss
                break
            if not self.load(now):
                break
        return compute, issued


def step(cursor: WorkloadCursor, granted_cycles: int, mode: str,
         issue: Callable[[int], int]) -> tuple[int, int]:
    """Run ``cursor`` for ``granted_cycles`` from its ``t_sync``.

    Returns ``(consumed_cycles, issued_requests)``. ``consumed`` is less than
    ``granted`` only when the workload runs out of work.
    """
    if cursor.idle and not cursor.load(cursor.t_sync):
        return 0, 0
    start = cursor.t_sync
    end = start + granted_cycles
    issued = 0
    while True:
        now = cursor.t_sync
        nxt = cursor.next_event(now)
        target = end if nxt is None or nxt > end else nxt
        _, n = cursor.advance(target, mode == FOREGROUND, issue)
        issued += n
        if cursor.idle:
            return target - start, issued
        if target >= end:
            return granted_cycles, issued
