"""Simulation executor: binds threads to cores and steps their workloads.

The scheduler decides *which* thread holds a master core; the protocol
decides when vLib cores run. This module advances whatever runs: it keeps a
single step event per busy core at the next instant something observable
happens (a chunk ends, a kernel path finishes, a scripted action is due).
"""

from __future__ import annotations

from typing import Optional

from .engine import Engine, EventKind, SimulationError
from .membus import MemoryBus
from .platform import KERNEL, WORK, Core, Thread, admit, build_platform
from .report import MetricsReport, collect
from .scenario import CallAction, ScenarioConfig, ScenarioError
from .scheduler import Scheduler
from .throttle import BusMonitor, ThrottlePolicy
from .vlibcall import Protocol, ProtocolError
from .workload import FOREGROUND, Periodic, ServiceJob


class Simulator:
    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None,
                 tracing: bool = False):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.engine = Engine(self.seed, tracing)
        self.platform = build_platform(config)
        self.admission = admit(list(self.platform.vcpus.values()))
        if config.platform.admission == "strict" and not self.admission.accepted:
            raise ScenarioError([f"admission rejected: {self.admission.reason}"], config.name)
        self.bus = MemoryBus(config.bus.base_service, config.bus.keep_log)
        self.scheduler = Scheduler(self, max(1, config.cycles(config.platform.quantum_ms)))
        self.protocol = Protocol(self)
        thr = config.throttle
        policy = ThrottlePolicy(max(1, config.cycles(thr.monitor_period_ms)),
                                thr.threshold(config.bus.base_service), thr.strength_k)
        self.monitor = BusMonitor(self, policy, thr.enabled and thr.strength_k > 0,
                                  thr.overhead_cycles, thr.overhead_core)
        self._step_at: dict = {}
        self.finished = False
        self._started = False

    # -- executor contract used by scheduler and protocol ------------------

    def start(self, core: Core, thread: Thread, mode: str) -> None:
        now = self.engine.now
        core.current = thread
        core.run_mode = mode
        core.t_sync = now
        if thread.cursor is not None:
            thread.cursor.t_sync = now
        self.engine.emit(core.id, thread.id, "run", mode=mode, activity=thread.activity)
        self._arm(core)

    def stop(self, core: Core) -> None:
        th = core.current
        if th is None:
            return
        self.sync(core)
        self.engine.cancel(core.step_ev)
        core.step_ev = None
        self._step_at.pop(core.id, None)
        if not core.is_master:
            self.engine.cancel(core.quantum_ev)
            core.quantum_ev = None
            core.run_mode = None
        core.current = None
        self.engine.emit(core.id, th.id, "stop")

    def sync(self, core: Core) -> None:
        """Account the time ``core`` spent on its current thread since ``t_sync``."""
        th = core.current
        now = self.engine.now
        elapsed = now - core.t_sync
        core.t_sync = now
        if th is None or elapsed < 0:
            return
        vcpu = th.vcpu if core.is_master else None
        mode = core.run_mode
        if vcpu is not None and elapsed:
            if self.scheduler.charge(vcpu, elapsed, mode) is not None:
                self.engine.emit(core.id, vcpu.name, "depleted")
        elif vcpu is None and elapsed:
            self.protocol.guest_charge(th, elapsed)
        cur = th.cursor
        if th.activity == WORK and cur is not None:
            job = cur.workload
            if vcpu is not None:
                def issue(t, v=vcpu, c=core):
                    v.usage.mem_requests += 1
                    v.usage.cache_bytes += cur.workload.line_bytes
                    return self.bus.issue(t, c.id, v.name, c.id)
            else:
                def issue(t, th=th, c=core):
                    return self.protocol.guest_issue(th, c, t)
            compute, _ = cur.advance(now, mode == FOREGROUND, issue)
            if vcpu is not None and compute:
                vcpu.current.instructions += compute
                if mode == FOREGROUND:
                    vcpu.current.fg_instructions += compute
            if th.is_server and isinstance(job, ServiceJob):
                call = th.domain.current
                if call is not None:
                    call.serviced = max(0, cur.instructions_retired - job.prefix)
        else:
            if cur is not None:
                cur.t_sync = now
            if th.activity == KERNEL:
                th.kernel_left -= elapsed
                if th.kernel_left < 0:
                    raise SimulationError(f"{th.id} overran its kernel path")

    def transition(self, thread: Thread, apply) -> None:
        """Change ``thread``'s activity, keeping its core's accounting exact."""
        core = thread.core
        running = core is not None and core.current is thread
        if running:
            self.sync(core)
        apply()
        if running and core.current is thread:
            if thread.cursor is not None:
                thread.cursor.t_sync = self.engine.now
            self._arm(core)

    # -- stepping ----------------------------------------------------------

    def _arm(self, core: Core) -> None:
        th = core.current
        if th is None:
            return
        now = self.engine.now
        nxt = None
        if th.done:
            nxt = now
        elif th.activity == WORK:
            cur = th.cursor
            if th.actions or cur is None:
                nxt = now
            elif cur.idle and not cur.load(now):
                nxt = now
            else:
                nxt = cur.next_event(now)
        elif th.activity == KERNEL:
            nxt = now + th.kernel_left
        if self._step_at.get(core.id) == nxt and self.engine.is_pending(core.step_ev):
            return
        self.engine.cancel(core.step_ev)
        core.step_ev = None
        self._step_at.pop(core.id, None)
        if nxt is not None:
            core.step_ev = self.engine.schedule(nxt, EventKind.WORKLOAD_STEP, self._on_step, core)
            self._step_at[core.id] = nxt

    def _on_step(self, core: Core) -> None:
        core.step_ev = None
        self._step_at.pop(core.id, None)
        th = core.current
        if th is None:
            return
        self.sync(core)
        if th.activity == KERNEL and th.kernel_left == 0:
            then = th.kernel_then
            self.engine.emit(core.id, th.id, "kernel_done")
            then()
        while core.current is th and th.activity == WORK and th.actions:
            self._begin_action(th, th.actions.popleft())
        if core.current is not th:
            return
        cur = th.cursor
        idle = th.done or (th.activity == WORK and (
            cur is None or (cur.idle and not cur.load(self.engine.now))))
        if idle:
            if th.vcpu is not None and core.is_master:
                self.scheduler.thread_changed(th)
            else:
                self.protocol.guest_idle(th, core)
        else:
            self._arm(core)

    # -- scripted actions and job releases ---------------------------------

    def _on_action(self, action: CallAction) -> None:
        th = self.platform.threads[action.thread]
        th.actions.append(action)
        self.engine.emit(None, th.id, "action_due", kind=action.kind, port=action.port)
        core = th.core
        if core is not None and core.current is th:
            self.sync(core)
            self._arm(core)
        else:
            self.scheduler.thread_changed(th)

    def _begin_action(self, th: Thread, a: CallAction) -> None:
        proto = self.protocol
        cyc = self.config.cycles
        key = (th.id, a.port)
        ch = proto.channels.get(key)
        try:
            if a.kind == "init":
                proto.vlib_init(th, a.port, a.channel_size)
                return
            if a.kind == "destroy":
                proto.vlib_channel_destroy(th, a.port)
                return
            if ch is not None and ch.state == "stale":
                proto.vlib_channel_destroy(th, a.port)
                ch = None
            if ch is None or ch.state == "destroyed":
                proto.vlib_init(th, a.port, a.channel_size)
            timeout = None if a.timeout_ms is None else cyc(a.timeout_ms)
            if a.kind == "call":
                proto.vlib_call(th, a.port, timeout, a.demand_cycles, a.miss_interval)
            elif a.kind == "donate":
                proto.donate(th, a.port, timeout)
            elif a.kind == "async":
                px = a.proxy
                proxy = {"budget": cyc(px["budget_ms"]), "period": cyc(px["period_ms"]),
                         "core": px["core"]}
                proto.vlib_async_call(th, a.port, None, timeout, a.demand_cycles,
                                      a.miss_interval, proxy, a.session)
        except ProtocolError as exc:
            raise SimulationError(f"scripted {a.kind} by {th.id} failed: {exc}") from exc

    def _on_release(self, th: Thread) -> None:
        wl = th.workload
        now = self.engine.now
        if not wl.release(now):
            return
        self.engine.emit(None, th.id, "release", job=wl.released)
        nxt = now + wl.period_cycles
        if nxt < self.config.duration_cycles:
            self.engine.schedule(nxt, EventKind.TIMER, self._on_release, th)
        core = th.core
        if core is not None and core.current is th:
            self.sync(core)
            self._arm(core)
        elif th.vcpu is not None:
            self.scheduler.thread_changed(th)
        elif core is not None:
            self.protocol.pick_guest(core)

    # -- driver --------------------------------------------------------------

    def start_run(self) -> None:
        """Arm releases, scripted actions, the monitor and the schedulers."""
        if self._started:
            return
        self._started = True
        eng = self.engine
        end = self.config.duration_cycles
        for th in self.platform.threads.values():
            wl = th.workload
            if isinstance(wl, Periodic) and wl.phase_cycles < end:
                eng.schedule(wl.phase_cycles, EventKind.TIMER, self._on_release, th)
        for a in sorted(self.config.calls, key=lambda a: a.at_ms):
            at = self.config.cycles(a.at_ms)
            if at < end:
                eng.schedule(at, EventKind.TIMER, self._on_action, a)
        self.monitor.start()
        self.protocol.start()
        self.scheduler.start()

    def run_until(self, t: int) -> int:
        """Advance to cycle ``t`` (not beyond the scenario duration)."""
        self.start_run()
        return self.engine.run_until(min(t, self.config.duration_cycles))

    def finish(self) -> MetricsReport:
        if self.finished:
            raise SimulationError("a Simulator instance runs once")
        end = self.config.duration_cycles
        self.run_until(end)
        for core in self.platform.cores.values():
            if core.current is not None:
                self.sync(core)
        for v in self.platform.vcpus.values():
            if v.run_log and v.run_log[-1][1] is None:
                v.run_log[-1][1] = end
        for call in self.protocol.calls:
            if call.segments and call.segments[-1][1] is None:
                call.segments[-1][1] = end
        self.finished = True
        return collect(self)

    def run(self) -> MetricsReport:
        return self.finish()


def run_scenario(config: ScenarioConfig, seed: Optional[int] = None,
                 tracing: bool = False) -> MetricsReport:
    return Simulator(config, seed, tracing).run()
