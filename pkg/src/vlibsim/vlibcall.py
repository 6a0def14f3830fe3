"""The vLib call protocol between master threads and vLib domains.

A vLib domain with a server parks (gate blocked) until a request arrives.
While a synchronous request is serviced, the domain executes only while the
calling thread is the running foreground VCPU on its master core; otherwise
the master remotely deschedules it. All server-side resource usage is
charged to the client.

Domain execution phases::

    blocked --vm_entry--> running --remote_desched--> blocked
                          running --service done--> exiting --vm_exit--> (next request | blocked)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count
from typing import TYPE_CHECKING, Callable, Optional

from .engine import EventKind
from .platform import KERNEL, REMOTE, VCPU, WORK, ResourceUsage, Thread, VMDomain
from .workload import FOREGROUND, ServiceJob, WorkloadCursor

if TYPE_CHECKING:
    from .simulator import Simulator


class ProtocolError(RuntimeError):
    pass


@dataclass(eq=False)
class Channel:
    port: int
    size: int
    owner_client: str
    state: str = "unmapped"
    completion_flag: bool = False
    pending: list = field(default_factory=list)


@dataclass(eq=False)
class CallRecord:
    id: int
    kind: str
    port: int
    client: Thread
    client_vcpu: int
    issued_at: int
    timeout: Optional[int]
    demand: int
    miss_interval: Optional[int] = None
    channel: Optional[Channel] = None
    state: str = "issuing"
    enqueued_at: Optional[int] = None
    first_service_at: Optional[int] = None
    completed_at: Optional[int] = None
    callback_at: Optional[int] = None
    suspensions: int = 0
    charged_cycles: int = 0
    charged_mem_requests: int = 0
    serviced: int = 0
    prefix: int = 0
    segments: list = field(default_factory=list)
    funder: Optional[Thread] = None
    callback: Optional[Callable] = None
    timeout_ev: Optional[int] = None
    session: Optional[list] = None

    @property
    def resolved(self) -> bool:
        return self.state in ("completed", "timed_out")


class Protocol:
    def __init__(self, sim: "Simulator"):
        self.sim = sim
        self.engine = sim.engine
        self.platform = sim.platform
        self.costs = sim.config.overheads
        self.async_enabled = sim.config.platform.async_enabled
        self.remote_background = sim.config.platform.remote_background
        self.channels: dict = {}
        self.calls: list = []
        # (time, domain, call id) in enqueue and service-start order
        self.enqueue_log: list = []
        self.service_log: list = []
        self._ids = count()
        self._proxy_ids = count(1000)

    def start(self) -> None:
        for dom in self.platform.vlib_domains:
            if not dom.server:
                self._guest_start(dom)

    # -- user API -------------------------------------------------------

    def vlib_init(self, client: Thread, port: int, channel_size: int = 4096) -> Channel:
        if self.platform.domain_for_port(port) is None:
            raise ProtocolError(f"no vLib domain listens on port {port}")
        key = (client.id, port)
        old = self.channels.get(key)
        if old is not None and old.state != "destroyed":
            raise ProtocolError(f"channel ({client.id}, {port}) already exists")
        ch = Channel(port, channel_size, client.id)
        self.channels[key] = ch
        self.engine.emit(None, client.id, "channel_init", port=port, size=channel_size)
        return ch

    def vlib_channel_destroy(self, client: Thread, port: int) -> None:
        ch = self.channels.get((client.id, port))
        if ch is None or ch.state == "destroyed":
            raise ProtocolError(f"no channel ({client.id}, {port})")
        if any(c.state == "servicing" for c in ch.pending):
            raise ProtocolError(f"channel ({client.id}, {port}) has a request in service")
        ch.state = "destroyed"
        self.engine.emit(None, client.id, "channel_destroy", port=port)

    def vlib_call(self, client: Thread, port: int, timeout: Optional[int] = None,
                  demand: int = 0, miss_interval: Optional[int] = None,
                  kind: str = "sync") -> CallRecord:
        """Start a synchronous call; the client enters the kernel path now.

        The returned record resolves to ``completed`` or ``timed_out`` as the
        simulation proceeds.
        """
        ch = self._usable_channel(client, port)
        if client.vcpu is None or client.domain.kind != "master":
            raise ProtocolError(f"{client.id} is not a master thread bound to a VCPU")
        if client.activity != WORK:
            raise ProtocolError(f"{client.id} is already in a vLib call")
        call = self._record(kind, client, port, timeout, demand, miss_interval, ch)
        self._enter_kernel(client, lambda: self._enqueue(call))
        return call

    def donate(self, client: Thread, port: int, timeout: Optional[int] = None) -> CallRecord:
        """Hand ``client``'s budget to the vLib OS for good (dummy-thread pattern)."""
        return self.vlib_call(client, port, timeout, 0, None, kind="donation")

    def vlib_async_call(self, client: Thread, port: int, callback: Optional[Callable] = None,
                        timeout: Optional[int] = None, demand: int = 0,
                        miss_interval: Optional[int] = None, proxy: Optional[dict] = None,
                        session: Optional[list] = None) -> CallRecord:
        if not self.async_enabled:
            raise ProtocolError("asynchronous vLib calls are disabled in this configuration")
        if self.platform.domain_for_port(port) is None:
            raise ProtocolError(f"no vLib domain listens on port {port}")
        if not proxy or not {"budget", "period", "core"} <= set(proxy):
            raise ProtocolError("asynchronous calls need proxy budget, period and core")
        ch = self._usable_channel(client, port)
        if client.activity != WORK:
            raise ProtocolError(f"{client.id} is already in a vLib call")
        if session:
            demand = sum(session)
        call = self._record("async", client, port, timeout, demand, miss_interval, ch)
        call.callback = callback
        call.session = list(session) if session else None

        def spawn():
            call.funder = self._spawn_proxy(call, proxy)
            self._enqueue(call)

        self._enter_kernel(client, spawn, remote=False)
        return call

    def _usable_channel(self, client: Thread, port: int) -> Channel:
        if self.platform.domain_for_port(port) is None:
            raise ProtocolError(f"no vLib domain listens on port {port}")
        ch = self.channels.get((client.id, port))
        if ch is None:
            raise ProtocolError(f"no channel ({client.id}, {port}); call vlib_init first")
        if ch.state == "destroyed":
            raise ProtocolError(f"channel ({client.id}, {port}) was destroyed")
        if ch.state == "stale":
            raise ProtocolError(f"channel ({client.id}, {port}) is stale after a timeout")
        return ch

    def _record(self, kind, client, port, timeout, demand, miss, ch) -> CallRecord:
        call = CallRecord(next(self._ids), kind, port, client,
                          client.vcpu.id if client.vcpu else -1, self.engine.now,
                          timeout, demand, miss, ch)
        call.funder = client
        if kind != "async":
            client.call = call
        ch.pending.append(call)
        self.calls.append(call)
        if timeout is not None:
            call.timeout_ev = self.engine.schedule(
                self.engine.now + timeout, EventKind.CALL_TIMEOUT, self._on_timeout, call)
        self.engine.emit(None, client.id, "vlib_call", call=call.id, kind=kind, port=port)
        return call

    def _enter_kernel(self, client: Thread, then: Callable, remote: bool = True) -> None:
        def done():
            client.kernel_then = None
            client.activity = REMOTE if remote else WORK
            then()

        def apply():
            client.activity = KERNEL
            client.kernel_left = self.costs.vlib_call
            client.kernel_then = done

        self.sim.transition(client, apply)

    def _spawn_proxy(self, call: CallRecord, proxy: dict) -> Thread:
        master = self.platform.master
        core = self.platform.cores[proxy["core"]]
        th = Thread(f"{call.client.id}.proxy{call.id}", master, core=core,
                    cursor=WorkloadCursor(None), is_proxy=True, activity=REMOTE)
        vid = next(self._proxy_ids)
        v = VCPU(vid, proxy["budget"], proxy["period"], core, phase=self.engine.now)
        v.thread, th.vcpu = th, v
        self.platform.vcpus[vid] = v
        self.platform.threads[th.id] = th
        self.sim.scheduler.add_vcpu(v)
        return th

    # -- queueing and service -------------------------------------------

    def _enqueue(self, call: CallRecord) -> None:
        dom = self.platform.domain_for_port(call.port)
        call.state = "queued"
        call.enqueued_at = self.engine.now
        dom.queue.append(call)
        self.enqueue_log.append((self.engine.now, dom.id, call.id))
        self.engine.emit(None, dom.id, "enqueue", call=call.id, depth=len(dom.queue))
        if call.funder is not call.client:
            self.sim.scheduler.thread_changed(call.funder)
        self._maybe_start_next(dom)
        self.refresh()

    def _maybe_start_next(self, dom: VMDomain) -> None:
        if not dom.server or dom.server_state == "terminated":
            return
        if dom.current is None and dom.completing is None and dom.phase == "blocked" and dom.queue:
            self._begin_service(dom, dom.queue.popleft())

    def _begin_service(self, dom: VMDomain, call: CallRecord) -> None:
        prefix = 0
        if call.channel.state == "unmapped":
            prefix = self.costs.channel_mapping
            call.channel.state = "mapped"
        call.prefix = prefix
        call.state = "servicing"
        self.service_log.append((self.engine.now, dom.id, call.id))
        dom.current = call
        dom.server_state = "servicing"
        dom.server_thread.cursor = WorkloadCursor(
            ServiceJob(call.demand, call.miss_interval, prefix))
        self.engine.emit(None, dom.id, "service_begin", call=call.id, mapping=prefix)

    def vlib_listen(self, dom: VMDomain) -> Optional[CallRecord]:
        """Server side: signal completion of the current request, then park or take the next."""
        if not dom.server:
            raise ProtocolError(f"domain {dom.id} runs no vLib server")
        if dom.current is not None:
            self._service_done(dom)
            return None
        if dom.queue and dom.completing is None:
            self._begin_service(dom, dom.queue.popleft())
            return dom.current
        self._park(dom)
        return None

    def _park(self, dom: VMDomain) -> None:
        dom.server_state = "listening"
        dom.phase = "blocked"
        dom.funded = False
        self.engine.emit(dom.cores[0].id, dom.id, "park")

    def _service_done(self, dom: VMDomain) -> None:
        call = dom.current
        self._guest_stop(dom)
        if call.kind == "donation":
            # the server exits without signalling; domain workloads inherit the budget
            dom.server_state = "terminated"
            self.engine.emit(dom.cores[0].id, dom.id, "server_terminated", call=call.id)
            if dom.phase == "running":
                self._guest_start(dom)
            return
        dom.current = None
        dom.completing = call
        dom.funded = False
        dom.phase = "exiting"
        self.engine.emit(dom.cores[0].id, dom.id, "vm_exit", call=call.id, cost=self.costs.vm_exit)
        dom.phase_ev = self.engine.schedule(
            self.engine.now + self.costs.vm_exit, EventKind.IPI, self._listen_done, dom)

    def _listen_done(self, dom: VMDomain) -> None:
        dom.phase_ev = None
        call, dom.completing = dom.completing, None
        if call is not None and not call.resolved:
            self._finish(call, "completed")
        dom.phase = "blocked"
        if dom.queue:
            nxt = dom.queue.popleft()
            self._begin_service(dom, nxt)
            if self._funder_active(dom):
                dom.phase = "running"
                dom.funded = True
                self._guest_start(dom)
        else:
            self._park(dom)
        self.refresh()

    def _finish(self, call: CallRecord, state: str) -> None:
        now = self.engine.now
        call.state = state
        call.completed_at = now
        if call in call.channel.pending:
            call.channel.pending.remove(call)
        call.channel.completion_flag = state == "completed"
        self.engine.cancel(call.timeout_ev)
        self.engine.emit(None, call.client.id, f"call_{state}", call=call.id,
                         elapsed=now - call.issued_at)
        if call.kind == "async":
            proxy = call.funder
            if proxy is not None and proxy.is_proxy:
                self.sim.transition(proxy, lambda: setattr(proxy, "done", True))
                self.sim.scheduler.retire_vcpu(proxy.vcpu)
                self.sim.scheduler.thread_changed(proxy)
            call.callback_at = now
            if call.callback is not None:
                call.callback(call)
        else:
            client = call.client
            if client.call is call:
                def back():
                    client.activity = WORK
                    client.kernel_then = None
                    client.kernel_left = 0
                    client.call = None
                self.sim.transition(client, back)
            self.sim.scheduler.thread_changed(client)

    def _on_timeout(self, call: CallRecord) -> None:
        call.timeout_ev = None
        if call.resolved:
            return
        dom = self.platform.domain_for_port(call.port)
        if call.state == "queued" and call in dom.queue:
            dom.queue.remove(call)
        elif dom.current is call:
            self._abandon(dom, call)
        elif dom.completing is call:
            dom.completing = None
        self.engine.emit(None, call.client.id, "call_timeout", call=call.id)
        self._finish(call, "timed_out")
        call.channel.state = "stale"
        self.refresh()

    def _abandon(self, dom: VMDomain, call: CallRecord) -> None:
        if dom.phase == "running":
            self.remote_deschedule(dom)
        elif dom.phase == "entering":
            self.engine.cancel(dom.phase_ev)
            dom.phase = "blocked"
        dom.funded = False
        dom.current = None
        dom.server_state = "listening"
        if dom.phase == "blocked":
            self._maybe_start_next(dom)

    # -- unified scheduling ----------------------------------------------

    def _funder_active(self, dom: VMDomain) -> bool:
        call = dom.current
        if call is None or dom.server_state not in ("servicing", "terminated"):
            return False
        th = call.funder
        if th is None or th.activity != REMOTE or th.done:
            return False
        core = th.vcpu.core
        if core.current is not th:
            return False
        return core.run_mode == FOREGROUND or self.remote_background

    def refresh(self) -> None:
        """Align every vLib gate with whether its funding client is running."""
        for dom in self.platform.vlib_domains:
            if not dom.server or dom.phase == "exiting":
                continue
            want = self._funder_active(dom)
            if want and not dom.funded:
                self.resume(dom)
            elif not want and dom.funded:
                self.remote_deschedule(dom)

    def resume(self, dom: VMDomain) -> None:
        dom.funded = True
        if dom.current is None:
            self.engine.emit(dom.cores[0].id, dom.id, "resume_noop")
            return
        if dom.phase == "blocked":
            dom.phase = "entering"
            self.engine.emit(dom.cores[0].id, dom.id, "vm_entry", cost=self.costs.vm_entry)
            dom.phase_ev = self.engine.schedule(
                self.engine.now + self.costs.vm_entry, EventKind.VM_UNBLOCK, self._entered, dom)

    def _entered(self, dom: VMDomain) -> None:
        dom.phase_ev = None
        dom.phase = "running"
        dom.usage_since_resume = ResourceUsage()
        self.engine.emit(dom.cores[0].id, dom.id, "gate_running")
        self._guest_start(dom)

    def remote_deschedule(self, dom: VMDomain) -> ResourceUsage:
        """Force-block ``dom``; returns the usage accrued since it last resumed."""
        dom.funded = False
        if dom.phase == "entering":
            self.engine.cancel(dom.phase_ev)
            dom.phase_ev = None
            dom.phase = "blocked"
            self.engine.emit(dom.cores[0].id, dom.id, "entry_aborted")
            return ResourceUsage()
        if dom.phase != "running":
            self.engine.emit(dom.cores[0].id, dom.id, "desched_noop", phase=dom.phase)
            return ResourceUsage()
        self._guest_stop(dom)
        usage = dom.usage_since_resume
        dom.usage_since_resume = ResourceUsage()
        if dom.current is not None:
            dom.current.suspensions += 1
        dom.phase = "descheduling"
        self.engine.emit(dom.cores[0].id, dom.id, "remote_desched", cost=self.costs.remote_desched,
                         cycles=usage.cpu_cycles, requests=usage.mem_requests)
        dom.phase_ev = self.engine.schedule(
            self.engine.now + self.costs.remote_desched, EventKind.IPI, self._desched_done, dom)
        return usage

    def _desched_done(self, dom: VMDomain) -> None:
        dom.phase_ev = None
        dom.phase = "blocked"
        self.engine.emit(dom.cores[0].id, dom.id, "gate_blocked")
        self._maybe_start_next(dom)
        if dom.funded:
            dom.funded = False
        self.refresh()

    # -- guest execution ---------------------------------------------------

    def _guest_start(self, dom: VMDomain) -> None:
        if dom.server and dom.server_state == "servicing":
            call = dom.current
            if call.first_service_at is None:
                call.first_service_at = self.engine.now
            call.segments.append([self.engine.now, None])
            self.sim.start(dom.cores[0], dom.server_thread, FOREGROUND)
            return
        for core in dom.cores:
            self.pick_guest(core)

    def _guest_stop(self, dom: VMDomain) -> None:
        for core in dom.cores:
            if core.current is not None:
                self.sim.stop(core)
        if dom.current is not None and dom.current.segments and dom.current.segments[-1][1] is None:
            dom.current.segments[-1][1] = self.engine.now

    def pick_guest(self, core) -> None:
        """Round-robin the runnable workload threads pinned to a vLib core."""
        dom = core.domain
        if dom.phase != "running" or (dom.server and dom.server_state != "terminated"):
            return
        now = self.engine.now
        if core.current is not None:
            self.sim.sync(core)
        threads = core.guest_threads
        runnable = [t for t in threads if t.runnable(now)]
        if core.current is not None and core.current.runnable(now) and len(runnable) <= 1:
            return
        if core.current is not None:
            self.sim.stop(core)
        if not runnable:
            return
        th = runnable[0]
        threads.remove(th)
        threads.append(th)
        self.sim.start(core, th, FOREGROUND)
        if len(runnable) > 1:
            core.quantum_ev = self.engine.schedule(
                now + self.sim.scheduler.quantum, EventKind.TIMER, self._guest_quantum, core)

    def _guest_quantum(self, core) -> None:
        core.quantum_ev = None
        self.pick_guest(core)

    def guest_charge(self, thread: Thread, cycles: int) -> None:
        dom = thread.domain
        dom.usage_since_resume.cpu_cycles += cycles
        call = dom.current
        if call is not None and dom.server:
            call.charged_cycles += cycles
            if call.funder is not None and call.funder.vcpu is not None:
                call.funder.vcpu.usage.cpu_cycles += cycles

    def guest_issue(self, thread: Thread, core, now: int) -> int:
        dom = thread.domain
        call = dom.current if dom.server else None
        dom.usage_since_resume.mem_requests += 1
        dom.usage_since_resume.cache_bytes += 64
        if call is not None and call.funder is not None and call.funder.vcpu is not None:
            v = call.funder.vcpu
            call.charged_mem_requests += 1
            v.usage.mem_requests += 1
            v.usage.cache_bytes += 64
            return self.sim.bus.issue(now, core.id, v.name, v.core.id)
        return self.sim.bus.issue(now, core.id, dom.account, core.id)

    def guest_idle(self, thread: Thread, core) -> None:
        """A guest thread ran out of work."""
        dom = thread.domain
        if thread.is_server:
            self.vlib_listen(dom)
        else:
            self.pick_guest(core)
