"""Per-core VCPU scheduling on the master cores.

A VCPU with budget left is in foreground mode and competes under
rate-monotonic priority. Once depleted it drops to background mode, where it
only runs when no foreground VCPU on its core is runnable; background time
is shared by picking the VCPU with the least accumulated background time.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Optional

from .engine import EventKind, SimulationError
from .platform import PeriodStats
from .workload import BACKGROUND, FOREGROUND

if TYPE_CHECKING:
    from .platform import VCPU, Core
    from .simulator import Simulator


class Scheduler:
    def __init__(self, sim: "Simulator", quantum: int):
        self.sim = sim
        self.engine = sim.engine
        self.quantum = quantum

    def start(self) -> None:
        for vcpu in self.sim.platform.vcpus.values():
            self._arm_boundary(vcpu)
        for core in self.sim.platform.master_cores:
            self.reschedule(core)

    # -- policy ---------------------------------------------------------

    def runnable(self, core: "Core", now: int) -> list:
        return [v for v in core.vcpus if v.active and v.thread.runnable(now)]

    def core_mode(self, core: "Core", now: Optional[int] = None) -> str:
        now = self.engine.now if now is None else now
        for v in core.vcpus:
            if v.active and v.remaining > 0 and v.thread.runnable(now):
                return FOREGROUND
        return BACKGROUND

    def pick_next(self, core: "Core", now: int) -> Optional[tuple]:
        """``(vcpu, mode)`` to run on ``core`` now, or None for idle."""
        if core.busy_until is not None and core.busy_until > now:
            return None
        cands = self.runnable(core, now)
        fg = [v for v in cands if v.remaining > 0]
        if fg:
            return min(fg, key=lambda v: v.priority), FOREGROUND
        if not cands:
            return None
        if core.throttled_until is not None and core.throttled_until > now:
            return None
        return min(cands, key=lambda v: (v.bgt_consumed, v.id)), BACKGROUND

    def charge(self, vcpu: "VCPU", cycles: int, mode: str) -> Optional[int]:
        """Account ``cycles`` of execution.

        In foreground mode the budget is floored at zero; the return value is
        the offset into ``cycles`` at which the budget ran out, if it did.
        """
        depleted_at = None
        stats = vcpu.current
        vcpu.usage.cpu_cycles += cycles
        if mode == FOREGROUND:
            used = min(cycles, vcpu.remaining)
            if vcpu.remaining > 0 and cycles >= vcpu.remaining:
                depleted_at = vcpu.remaining
            vcpu.remaining -= used
            vcpu.fg_cycles += used
            stats.fg_cycles += used
            if cycles > used:
                vcpu.bgt_consumed += cycles - used
                vcpu.bg_cycles += cycles - used
                stats.bg_cycles += cycles - used
        else:
            vcpu.bgt_consumed += cycles
            vcpu.bg_cycles += cycles
            stats.bg_cycles += cycles
        return depleted_at

    # -- dispatch -------------------------------------------------------

    def reschedule(self, core: "Core") -> None:
        now = self.engine.now
        if core.current is not None:
            self.sim.sync(core)
        want = self.pick_next(core, now)
        cur = (core.run_vcpu, core.run_mode) if core.current is not None else None
        if want != cur:
            if cur is not None:
                self._undispatch(core)
            if want is not None:
                self._dispatch(core, *want)
        elif cur is not None and cur[1] == BACKGROUND:
            self._arm_quantum(core)
        if want is None:
            self._arm_wake(core, now)
        self.sim.protocol.refresh()

    def _dispatch(self, core: "Core", vcpu: "VCPU", mode: str) -> None:
        now = self.engine.now
        core.run_vcpu = vcpu
        core.run_mode = mode
        vcpu.run_log.append([now, None, mode])
        self.engine.emit(core.id, vcpu.name, "dispatch", mode=mode,
                         remaining=vcpu.remaining, thread=vcpu.thread.id)
        self.sim.start(core, vcpu.thread, mode)
        if mode == FOREGROUND:
            core.deplete_ev = self.engine.schedule(
                now + vcpu.remaining, EventKind.TIMER, self._on_depleted, core)
        else:
            self._arm_quantum(core)

    def _undispatch(self, core: "Core") -> None:
        now = self.engine.now
        vcpu = core.run_vcpu
        self.sim.stop(core)
        self.engine.cancel(core.deplete_ev)
        self.engine.cancel(core.quantum_ev)
        core.deplete_ev = core.quantum_ev = None
        vcpu.run_log[-1][1] = now
        self.engine.emit(core.id, vcpu.name, "preempt", mode=core.run_mode,
                         remaining=vcpu.remaining)
        core.run_vcpu = None
        core.run_mode = None

    def _arm_quantum(self, core: "Core") -> None:
        if self.engine.is_pending(core.quantum_ev):
            return
        others = [v for v in self.runnable(core, self.engine.now) if v is not core.run_vcpu]
        if others:
            core.quantum_ev = self.engine.schedule(
                self.engine.now + self.quantum, EventKind.TIMER, self._on_quantum, core)

    def _arm_wake(self, core: "Core", now: int) -> None:
        until = max(core.throttled_until or 0, core.busy_until or 0)
        if until > now and not self.engine.is_pending(core.wake_ev):
            core.wake_ev = self.engine.schedule(until, EventKind.TIMER, self._on_wake, core)

    # -- event handlers -------------------------------------------------

    def _on_depleted(self, core: "Core") -> None:
        core.deplete_ev = None
        vcpu = core.run_vcpu
        self.sim.sync(core)
        if vcpu.remaining != 0:
            raise SimulationError(f"{vcpu.name} depletion fired with {vcpu.remaining} left")
        self.on_budget_depleted(vcpu)

    def on_budget_depleted(self, vcpu: "VCPU") -> None:
        """Drop ``vcpu`` to background; a remote-state client loses its callee."""
        self.reschedule(vcpu.core)

    def _on_quantum(self, core: "Core") -> None:
        core.quantum_ev = None
        self.reschedule(core)

    def _on_wake(self, core: "Core") -> None:
        core.wake_ev = None
        self.reschedule(core)

    def _arm_boundary(self, vcpu: "VCPU") -> None:
        k = len(vcpu.periods)
        at = vcpu.phase + k * vcpu.period
        if k and at >= self.sim.config.duration_cycles:
            return  # a period opening at the horizon would be empty
        vcpu.boundary_ev = self.engine.schedule(
            at, EventKind.PERIOD_BOUNDARY, self.on_period_boundary, vcpu)

    def on_period_boundary(self, vcpu: "VCPU") -> None:
        if not vcpu.active:
            return
        now = self.engine.now
        core = vcpu.core
        running = core.run_vcpu is vcpu
        if running:
            self.sim.sync(core)
        vcpu.periods.append(PeriodStats(len(vcpu.periods), now))
        vcpu.remaining = vcpu.budget
        self.engine.emit(core.id, vcpu.name, "replenish", budget=vcpu.budget)
        if running and core.run_mode == FOREGROUND:
            self.engine.cancel(core.deplete_ev)
            core.deplete_ev = self.engine.schedule(
                now + vcpu.remaining, EventKind.TIMER, self._on_depleted, core)
        self._arm_boundary(vcpu)
        self.reschedule(core)

    def thread_changed(self, thread) -> None:
        if thread.vcpu is not None:
            self.reschedule(thread.vcpu.core)

    def add_vcpu(self, vcpu: "VCPU") -> None:
        vcpu.core.vcpus.append(vcpu)
        self._arm_boundary(vcpu)

    def retire_vcpu(self, vcpu: "VCPU") -> None:
        vcpu.active = False
        self.engine.cancel(vcpu.boundary_ev)
