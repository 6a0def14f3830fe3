"""Bus monitoring and latency-based proportional throttling.

Every monitor period the master computes the average DRAM latency of the
elapsed window. At or above the threshold, each background-mode core is
idled for a share of the next period proportional to the traffic charged to
it. Foreground execution is never throttled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Mapping, Optional

from .engine import EventKind
from .membus import BusCounters, avg_latency
from .workload import BACKGROUND

if TYPE_CHECKING:
    from .simulator import Simulator


@dataclass(frozen=True)
class ThrottlePolicy:
    monitor_period: int
    latency_threshold: float
    strength_k: float = 1.0

    def __post_init__(self):
        if self.monitor_period <= 0:
            raise ValueError("monitor_period must be positive")
        if self.latency_threshold <= 0:
            raise ValueError("latency_threshold must be positive")
        if not 0 <= self.strength_k <= 1:
            raise ValueError("strength_k must lie in [0, 1]")


@dataclass(frozen=True)
class ThrottleDecision:
    window: tuple
    latency: Optional[Fraction]
    triggered: bool
    per_core_durations: dict = field(default_factory=dict)


def decide(policy: ThrottlePolicy, counters: BusCounters,
           traffic: Mapping[int, int], background: set) -> ThrottleDecision:
    """Pure throttling rule for one window.

    ``traffic`` maps core id to requests charged to that core in the window;
    only cores in ``background`` receive a duration.
    """
    window = (counters.window_start, counters.window_end)
    lat = avg_latency(counters)
    if lat is None or lat < Fraction(policy.latency_threshold):
        return ThrottleDecision(window, lat, False, {})
    bg = {c: traffic.get(c, 0) for c in sorted(background)}
    total = sum(bg.values())
    durations = {}
    if total:
        k = Fraction(policy.strength_k)
        for c, r in bg.items():
            d = int(policy.monitor_period * Fraction(r, total) * k)
            if d > 0:
                durations[c] = d
    return ThrottleDecision(window, lat, True, durations)


class BusMonitor:
    """Periodic monitor tick: logs the bus window and, if enabled, throttles."""

    def __init__(self, sim: "Simulator", policy: ThrottlePolicy, enabled: bool,
                 overhead_cycles: int = 0, overhead_core: Optional[int] = None):
        self.sim = sim
        self.policy = policy
        self.enabled = enabled
        self.overhead_cycles = overhead_cycles
        self.overhead_core = overhead_core
        self.windows: list = []
        self.decisions: list = []
        self._last = (0, 0, 0)

    def start(self) -> None:
        self.sim.engine.schedule(self.policy.monitor_period, EventKind.MONITOR_TICK, self.tick)

    def background_cores(self) -> set:
        """Master cores with no runnable foreground VCPU."""
        sched = self.sim.scheduler
        now = self.sim.engine.now
        return {c.id for c in self.sim.platform.master_cores
                if c.vcpus and sched.core_mode(c, now) == BACKGROUND}

    def tick(self, _payload=None) -> ThrottleDecision:
        sim = self.sim
        now = sim.engine.now
        t0, occ0, req0 = self._last
        occ, req = sim.bus.cumulative(now)
        traffic = sim.bus.cut_window(now)
        self._last = (now, occ, req)
        counters = BusCounters(t0, now, occ - occ0, req - req0)
        self.windows.append(counters)
        sim.engine.schedule(now + self.policy.monitor_period, EventKind.MONITOR_TICK, self.tick)
        if self.overhead_cycles and self.overhead_core is not None:
            core = sim.platform.cores[self.overhead_core]
            core.busy_until = now + self.overhead_cycles
            sim.scheduler.reschedule(core)
        if not self.enabled:
            return None
        decision = decide(self.policy, counters, traffic, self.background_cores())
        self.decisions.append(decision)
        if decision.triggered:
            sim.engine.emit(None, "monitor", "throttle", latency=float(decision.latency),
                            cores=len(decision.per_core_durations))
        self.apply(decision, now)
        return decision

    def apply(self, decision: ThrottleDecision, now: int) -> None:
        for cid, d in decision.per_core_durations.items():
            core = self.sim.platform.cores[cid]
            core.throttled_until = now + d
            self.sim.scheduler.reschedule(core)
