"""Shared memory bus: FIFO single-server DRAM queue with PMU-style counters.

``occupancy`` over a window is the cycle-weighted number of pending requests
and ``requests`` the number of arrivals; their ratio is the average latency.
"""

from __future__ import annotations

from array import array
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np


@dataclass(frozen=True)
class BusCounters:
    window_start: int
    window_end: int
    occupancy: int
    requests: int


def avg_latency(counters: BusCounters) -> Optional[Fraction]:
    """Average cycles per request, or None for a window without traffic."""
    if counters.requests == 0:
        return None
    return Fraction(counters.occupancy, counters.requests)


def window_counters(intervals: Iterable[tuple[int, int]], t0: int, t1: int) -> BusCounters:
    """Counters for explicit pending intervals ``(arrive, complete)`` over ``[t0, t1)``."""
    occupancy = 0
    requests = 0
    for arrive, complete in intervals:
        occupancy += max(0, min(complete, t1) - max(arrive, t0))
        if t0 <= arrive < t1:
            requests += 1
    return BusCounters(t0, t1, occupancy, requests)


class MemoryBus:
    """Single service queue shared by every core.

    Completion of a request issued at ``now`` is ``max(now, free_at) +
    base_service``. Because service is FIFO, completion times are
    non-decreasing in issue order, which keeps the in-flight set a deque.
    """

    def __init__(self, base_service: int = 40, keep_log: bool = True):
        if base_service <= 0:
            raise ValueError("base_service must be positive")
        self.base_service = base_service
        self.keep_log = keep_log
        self.free_at = 0
        self.total = 0
        self._dur_sum = 0
        self._inflight: deque = deque()
        self._arrive = array("q")
        self._complete = array("q")
        self.by_account: dict = {}
        self.by_core: dict = {}
        # per throttle-attribution core, arrivals since the last window cut
        self._window_by_core: dict = {}

    def issue(self, now: int, core: int, account: str, attribute_core: Optional[int] = None) -> int:
        start = self.free_at if self.free_at > now else now
        complete = start + self.base_service
        self.free_at = complete
        self.total += 1
        self._dur_sum += complete - now
        owner = core if attribute_core is None else attribute_core
        self._inflight.append((now, complete, owner))
        if self.keep_log:
            self._arrive.append(now)
            self._complete.append(complete)
        self.by_account[account] = self.by_account.get(account, 0) + 1
        self.by_core[core] = self.by_core.get(core, 0) + 1
        self._window_by_core[owner] = self._window_by_core.get(owner, 0) + 1
        return complete

    def _prune(self, t: int) -> None:
        inflight = self._inflight
        while inflight and inflight[0][1] <= t:
            inflight.popleft()

    def cumulative(self, t: int) -> tuple[int, int]:
        """Occupancy integral over ``[0, t)`` and arrivals before ``t``.

        ``t`` must not be earlier than any request still tracked in flight;
        in practice it is the current simulated time.
        """
        self._prune(t)
        occupancy = self._dur_sum
        requests = self.total
        for arrive, complete, _ in self._inflight:
            occupancy -= complete - max(arrive, t)
            if arrive >= t:
                requests -= 1
        return occupancy, requests

    def cut_window(self, t: int) -> dict:
        """Per-core arrivals since the previous cut, restricted to ``arrive < t``."""
        counts = self._window_by_core
        carry: dict = {}
        for arrive, _, owner in self._inflight:
            if arrive >= t:
                counts[owner] -= 1
                carry[owner] = carry.get(owner, 0) + 1
        self._window_by_core = carry
        return {c: n for c, n in counts.items() if n}

    def intervals(self) -> np.ndarray:
        """All logged ``(arrive, complete)`` pairs as an ``(n, 2)`` array."""
        out = np.empty((len(self._arrive), 2), dtype=np.int64)
        out[:, 0] = np.frombuffer(self._arrive, dtype=np.int64) if len(self._arrive) else []
        out[:, 1] = np.frombuffer(self._complete, dtype=np.int64) if len(self._complete) else []
        return out

    def counters_for(self, t0: int, t1: int) -> BusCounters:
        if not self.keep_log:
            raise RuntimeError("bus log disabled; only monitor windows are available")
        if t1 < t0:
            raise ValueError("empty window must have t1 >= t0")
        iv = self.intervals()
        if len(iv) == 0:
            return BusCounters(t0, t1, 0, 0)
        a, c = iv[:, 0], iv[:, 1]
        overlap = np.minimum(c, t1) - np.maximum(a, t0)
        occupancy = int(overlap[overlap > 0].sum())
        requests = int(np.count_nonzero((a >= t0) & (a < t1)))
        return BusCounters(t0, t1, occupancy, requests)
