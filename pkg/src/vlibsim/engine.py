"""Deterministic discrete-event core.

Time is an integer count of CPU cycles. Events fire in ``(fire_at, sequence)``
order, so simultaneous events dispatch in the order they were scheduled.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np

RNG_ALGORITHM = "numpy.random.PCG64"


class EventKind(str, Enum):
    TIMER = "timer"
    PERIOD_BOUNDARY = "period-boundary"
    REQUEST_COMPLETE = "request-complete"
    MONITOR_TICK = "monitor-tick"
    IPI = "ipi"
    VM_UNBLOCK = "vm-unblock"
    CALL_TIMEOUT = "call-timeout"
    WORKLOAD_STEP = "workload-step"


class SimulationError(RuntimeError):
    """A handler failed while dispatching ``event``."""

    def __init__(self, message: str, event: Optional["Event"] = None):
        super().__init__(message)
        self.event = event


@dataclass(frozen=True)
class Event:
    fire_at: int
    sequence: int
    kind: EventKind
    payload: Any = None


@dataclass(frozen=True)
class TraceRecord:
    at: int
    core: Optional[int]
    subject: str
    action: str
    detail: tuple = ()

    def format(self) -> str:
        core = "-" if self.core is None else str(self.core)
        detail = ";".join(f"{k}={_fmt(v)}" for k, v in self.detail)
        return f"{self.at}\t{core}\t{self.subject}\t{self.action}\t{detail}"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9f}"
    return str(value)


@dataclass
class Engine:
    """Event queue, simulated clock, seeded RNG and trace sink."""

    seed: int = 0
    tracing: bool = False
    now: int = 0
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self.rng = np.random.Generator(np.random.PCG64(self.seed))
        self._heap: list = []
        self._pending: dict = {}
        self._seq = 0
        self.scheduled = 0
        self.dispatched = 0
        self.cancelled = 0

    def schedule(self, fire_at: int, kind: EventKind,
                 handler: Callable[[Any], None], payload: Any = None) -> int:
        if fire_at < self.now:
            raise SimulationError(
                f"cannot schedule {kind.value} at {fire_at} < now={self.now}")
        seq = self._seq
        self._seq += 1
        self._pending[seq] = (kind, handler, payload)
        heapq.heappush(self._heap, (fire_at, seq))
        self.scheduled += 1
        return seq

    def cancel(self, event_id: Optional[int]) -> bool:
        if event_id is None or self._pending.pop(event_id, None) is None:
            return False
        self.cancelled += 1
        return True

    def is_pending(self, event_id: Optional[int]) -> bool:
        return event_id is not None and event_id in self._pending

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def run_until(self, t_end: int) -> int:
        if t_end < self.now:
            raise SimulationError(f"run_until({t_end}) is before now={self.now}")
        heap = self._heap
        pending = self._pending
        count = 0
        while heap and heap[0][0] <= t_end:
            fire_at, seq = heapq.heappop(heap)
            entry = pending.pop(seq, None)
            if entry is None:
                continue
            self.now = fire_at
            kind, handler, payload = entry
            count += 1
            self.dispatched += 1
            try:
                handler(payload)
            except SimulationError:
                raise
            except Exception as exc:
                event = Event(fire_at, seq, kind, payload)
                raise SimulationError(
                    f"handler for {kind.value} at {fire_at} failed: {exc!r}",
                    event) from exc
        self.now = t_end
        return count

    def emit(self, core: Optional[int], subject: str, action: str, **detail) -> None:
        if self.tracing:
            self.trace.append(
                TraceRecord(self.now, core, subject, action, tuple(detail.items())))

    def trace_lines(self) -> list[str]:
        return [r.format() for r in self.trace]
