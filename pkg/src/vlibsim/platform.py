"""Static machine model: cores, VM domains, threads and VCPUs.

Cores are statically partitioned between one master domain and any number
of vLib domains. Every master thread is bound one-to-one to a VCPU that
reserves ``budget`` cycles every ``period`` cycles on a fixed core.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Optional, Sequence

from .scenario import ScenarioConfig, ScenarioError, validate
from .workload import WorkloadCursor, make_workload

# thread activities
WORK = "work"          # running its own workload
KERNEL = "kernel"      # executing a vLib call path in the master kernel
REMOTE = "remote"      # busy-waiting for a synchronous vLib call


@dataclass
class ResourceUsage:
    cpu_cycles: int = 0
    mem_requests: int = 0
    cache_bytes: int = 0

    def add(self, other: "ResourceUsage") -> None:
        self.cpu_cycles += other.cpu_cycles
        self.mem_requests += other.mem_requests
        self.cache_bytes += other.cache_bytes

    def __add__(self, other: "ResourceUsage") -> "ResourceUsage":
        return ResourceUsage(self.cpu_cycles + other.cpu_cycles,
                             self.mem_requests + other.mem_requests,
                             self.cache_bytes + other.cache_bytes)


@dataclass
class PeriodStats:
    index: int
    start: int
    fg_cycles: int = 0
    bg_cycles: int = 0
    fg_instructions: int = 0
    instructions: int = 0


@dataclass(eq=False)
class VCPU:
    id: int
    budget: int
    period: int
    core: "Core"
    thread: "Thread" = None
    phase: int = 0
    remaining: int = 0
    bgt_consumed: int = 0
    fg_cycles: int = 0
    bg_cycles: int = 0
    usage: ResourceUsage = field(default_factory=ResourceUsage)
    periods: list = field(default_factory=list)
    # (start, end, mode) intervals during which this VCPU held its core
    run_log: list = field(default_factory=list)
    active: bool = True
    boundary_ev: Optional[int] = None

    def __post_init__(self):
        self.remaining = self.budget
        self.periods.append(PeriodStats(0, self.phase))

    @property
    def priority(self) -> tuple:
        return (self.period, self.id)

    @property
    def utilization(self) -> Fraction:
        return Fraction(self.budget, self.period)

    @property
    def current(self) -> PeriodStats:
        return self.periods[-1]

    @property
    def name(self) -> str:
        return f"vcpu{self.id}"


@dataclass(eq=False)
class Thread:
    id: str
    domain: "VMDomain"
    vcpu: Optional[VCPU] = None
    core: Optional["Core"] = None
    cursor: WorkloadCursor = None
    activity: str = WORK
    actions: deque = field(default_factory=deque)
    kernel_left: int = 0
    kernel_then: object = None
    call: object = None
    is_server: bool = False
    is_proxy: bool = False
    done: bool = False

    @property
    def workload(self):
        return self.cursor.workload if self.cursor else None

    def runnable(self, now: int) -> bool:
        if self.done:
            return False
        if self.activity != WORK or self.actions:
            return True
        cur = self.cursor
        if cur is None:
            return False
        return not cur.idle or cur.load(now)

    @property
    def state(self) -> str:
        if self.done:
            return "done"
        if self.activity == REMOTE:
            return "remote"
        if self.core is not None and self.core.current is self:
            return "running"
        return "ready" if self.activity != WORK or self.actions or (
            self.cursor is not None and not self.cursor.idle) else "blocked"


@dataclass(eq=False)
class Core:
    id: int
    domain: "VMDomain" = None
    vcpus: list = field(default_factory=list)
    throttled_until: Optional[int] = None
    busy_until: Optional[int] = None
    current: Optional[Thread] = None
    run_vcpu: Optional[VCPU] = None
    run_mode: Optional[str] = None
    t_sync: int = 0
    step_ev: Optional[int] = None
    deplete_ev: Optional[int] = None
    quantum_ev: Optional[int] = None
    wake_ev: Optional[int] = None
    guest_threads: list = field(default_factory=list)

    @property
    def is_master(self) -> bool:
        return self.domain.kind == "master"


@dataclass(eq=False)
class VMDomain:
    id: str
    kind: str
    cores: list = field(default_factory=list)
    port: Optional[int] = None
    server: bool = False
    server_state: str = "idle"
    # protocol runtime state
    phase: str = "running"
    funded: bool = False
    queue: deque = field(default_factory=deque)
    current: object = None
    completing: object = None
    phase_ev: Optional[int] = None
    server_thread: Optional[Thread] = None
    usage_since_resume: ResourceUsage = field(default_factory=ResourceUsage)

    @property
    def gate(self) -> str:
        return "running" if self.phase == "running" else "blocked"

    @property
    def account(self) -> str:
        return f"vm:{self.id}"


@dataclass
class Platform:
    cycles_per_ms: int
    cores: dict
    domains: dict
    threads: dict
    vcpus: dict

    @property
    def master(self) -> VMDomain:
        return next(d for d in self.domains.values() if d.kind == "master")

    def domain_for_port(self, port: int) -> Optional[VMDomain]:
        for d in self.domains.values():
            if d.kind == "vlib" and d.port == port:
                return d
        return None

    @property
    def vlib_domains(self) -> list:
        return [d for d in self.domains.values() if d.kind == "vlib"]

    @property
    def master_cores(self) -> list:
        return [c for c in self.cores.values() if c.is_master]


def build_platform(config: ScenarioConfig) -> Platform:
    errors = validate(config)
    if errors:
        raise ScenarioError(errors, config.name)
    cpm = config.platform.cycles_per_ms
    cores = {i: Core(i) for i in range(config.platform.cores)}
    domains = {}
    for dc in config.platform.domains:
        dom = VMDomain(dc.id, dc.kind, [cores[c] for c in dc.cores], dc.port, dc.server)
        for c in dc.cores:
            cores[c].domain = dom
        if dc.kind == "vlib" and dc.server:
            dom.server_state = "listening"
            dom.phase = "blocked"
        domains[dc.id] = dom
    unowned = [c for c in cores.values() if c.domain is None]
    if unowned:
        # cores not assigned to any domain belong to nobody and stay idle
        idle = VMDomain("unassigned", "none", unowned)
        for c in unowned:
            c.domain = idle
    threads = {}
    for tc in config.threads:
        dom = domains[tc.domain]
        wl = make_workload(tc.workload, cpm) if tc.workload is not None else None
        th = Thread(tc.id, dom, cursor=WorkloadCursor(wl))
        if dom.kind == "vlib":
            th.core = cores[tc.core]
            th.core.guest_threads.append(th)
        threads[tc.id] = th
    vcpus = {}
    for vc in sorted(config.vcpus, key=lambda v: v.id):
        core = cores[vc.core]
        v = VCPU(vc.id, config.cycles(vc.budget_ms), config.cycles(vc.period_ms), core)
        th = threads[vc.thread]
        v.thread, th.vcpu, th.core = th, v, core
        core.vcpus.append(v)
        vcpus[vc.id] = v
    for dom in domains.values():
        if dom.kind == "vlib" and dom.server:
            srv = Thread(f"{dom.id}.server", dom, core=dom.cores[0],
                         cursor=WorkloadCursor(None), is_server=True)
            dom.server_thread = srv
    return Platform(cpm, cores, domains, threads, vcpus)


def rms_bound(n: int) -> float:
    """Liu-Layland utilization bound ``n (2^(1/n) - 1)``."""
    if n <= 0:
        raise ValueError("n must be positive")
    return n * math.expm1(math.log(2.0) / n)


def is_harmonic(periods: Sequence[int]) -> bool:
    ps = sorted({Fraction(p) for p in periods})
    return all((b / a).denominator == 1 for a, b in zip(ps, ps[1:]))


def hyperperiod(periods: Sequence[int]) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), periods, 1)


@dataclass(frozen=True)
class Admission:
    accepted: bool
    reason: Optional[str] = None
    utilization: dict = field(default_factory=dict)


def admit(vcpus) -> Admission:
    """Per-core rate-monotonic admission test.

    ``vcpus`` holds :class:`VCPU` objects or ``(C, T)`` / ``(C, T, core)``
    tuples; tuples without a core share core 0. Harmonic period sets are
    accepted up to full utilization, others up to ``rms_bound(n)``.
    """
    per_core: dict = {}
    for v in vcpus:
        if isinstance(v, VCPU):
            c, t, core = v.budget, v.period, v.core.id
        else:
            c, t, core = (tuple(v) + (0,))[:3]
        if t <= 0:
            return Admission(False, f"non-positive period {t}")
        if c > t or c < 0:
            return Admission(False, f"budget {c} outside [0, period {t}]")
        per_core.setdefault(core, []).append((c, t))
    util = {}
    for core, items in sorted(per_core.items()):
        u = sum((Fraction(c) / Fraction(t) for c, t in items), Fraction(0))
        util[core] = u
        n = len(items)
        if is_harmonic([t for _, t in items]):
            if u > 1:
                return Admission(False, f"core {core}: harmonic U={float(u):.4f} > 1", util)
        elif u > rms_bound(n):
            return Admission(
                False, f"core {core}: U={float(u):.4f} exceeds RMS bound {rms_bound(n):.4f} (n={n})", util)
    return Admission(True, None, util)
