"""Scenario files: YAML documents validated by a bundled JSON schema.

Structural problems are reported by the schema; semantic problems
(overlapping cores, dangling ids, C > T, ...) by :func:`validate`. Both
collect every error rather than stopping at the first.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema
import yaml

from .workload import WorkloadSpec

DEFAULT_CYCLES_PER_MS = 3_300_000


class ScenarioError(ValueError):
    def __init__(self, errors: list[str], source: str = "<scenario>"):
        self.errors = list(errors)
        self.source = source
        super().__init__(f"{source}: " + "; ".join(self.errors))


@dataclass
class OverheadTable:
    vm_entry: int = 531
    vm_exit: int = 481
    vlib_call: int = 4754
    remote_desched: int = 1153
    channel_mapping: int = 2377


@dataclass
class DomainConfig:
    id: str
    kind: str
    cores: list
    port: Optional[int] = None
    server: bool = False


@dataclass
class PlatformConfig:
    cores: int
    domains: list
    cycles_per_ms: int = DEFAULT_CYCLES_PER_MS
    quantum_ms: float = 1.0
    admission: str = "advisory"
    async_enabled: bool = False
    remote_background: bool = False


@dataclass
class VCPUConfig:
    id: int
    thread: str
    budget_ms: float
    period_ms: float
    core: int


@dataclass
class ThreadConfig:
    id: str
    domain: str
    core: Optional[int] = None
    workload: Optional[WorkloadSpec] = None


@dataclass
class BusConfig:
    base_service: int = 40
    keep_log: bool = True


@dataclass
class ThrottleConfig:
    enabled: bool = False
    monitor_period_ms: float = 1.0
    latency_threshold: Optional[float] = None
    strength_k: float = 1.0
    overhead_cycles: int = 0
    overhead_core: Optional[int] = None

    def threshold(self, base_service: int) -> float:
        if self.latency_threshold is None:
            return 1.5 * base_service
        return self.latency_threshold


@dataclass
class CallAction:
    at_ms: float
    thread: str
    kind: str
    port: int
    demand_cycles: int = 0
    miss_interval: Optional[int] = None
    timeout_ms: Optional[float] = None
    channel_size: int = 4096
    session: Optional[list] = None
    proxy: Optional[dict] = None


@dataclass
class ScenarioConfig:
    name: str
    platform: PlatformConfig
    threads: list
    vcpus: list = field(default_factory=list)
    bus: BusConfig = field(default_factory=BusConfig)
    throttle: ThrottleConfig = field(default_factory=ThrottleConfig)
    calls: list = field(default_factory=list)
    overheads: OverheadTable = field(default_factory=OverheadTable)
    duration_ms: float = 100.0
    seed: int = 0
    description: str = ""
    # baselines for slowdown comparison: {victim, alone, uncontrolled}
    compare: Optional[dict] = None

    def cycles(self, ms: float) -> int:
        return int(round(ms * self.platform.cycles_per_ms))

    @property
    def duration_cycles(self) -> int:
        return self.cycles(self.duration_ms)

    def digest(self) -> str:
        blob = json.dumps(to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("vlibsim").joinpath("scenario.schema.json").read_text()
        _SCHEMA = json.loads(text)
    return _SCHEMA


def _build(cls, data: dict):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in data.items() if k in names})


def from_dict(data: dict) -> ScenarioConfig:
    d = copy.deepcopy(data)
    plat = d["platform"]
    plat["domains"] = [_build(DomainConfig, x) for x in plat.get("domains", [])]
    threads = []
    for t in d.get("threads", []):
        wl = t.get("workload")
        if wl is not None:
            wl = dict(wl)
            t["workload"] = WorkloadSpec(wl.pop("kind"), wl)
        threads.append(_build(ThreadConfig, t))
    return ScenarioConfig(
        name=d.get("name", "unnamed"),
        description=d.get("description", ""),
        platform=_build(PlatformConfig, plat),
        threads=threads,
        vcpus=[_build(VCPUConfig, v) for v in d.get("vcpus", [])],
        bus=_build(BusConfig, d.get("bus", {})),
        throttle=_build(ThrottleConfig, d.get("throttle", {})),
        calls=[_build(CallAction, c) for c in d.get("calls", [])],
        overheads=_build(OverheadTable, d.get("overheads", {})),
        duration_ms=d.get("duration_ms", 100.0),
        seed=d.get("seed", 0),
        compare=d.get("compare"),
    )


def to_dict(config: ScenarioConfig) -> dict:
    out = asdict(config)
    for t, tc in zip(out["threads"], config.threads):
        if tc.workload is not None:
            t["workload"] = {"kind": tc.workload.kind, **tc.workload.params}
    return out


def serialize(config: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False)


def validate(config: ScenarioConfig) -> list[str]:
    """Semantic checks; returns every violation found."""
    errors: list[str] = []
    plat = config.platform
    if plat.cycles_per_ms <= 0:
        errors.append("platform.cycles_per_ms must be positive")
        return errors
    if config.duration_ms <= 0:
        errors.append("duration_ms must be positive")
    masters = [d for d in plat.domains if d.kind == "master"]
    if len(masters) != 1:
        errors.append(f"exactly one master domain required, found {len(masters)}")
    owner: dict = {}
    for dom in plat.domains:
        for c in dom.cores:
            if not 0 <= c < plat.cores:
                errors.append(f"domain {dom.id}: core {c} out of range")
            if c in owner:
                errors.append(f"core {c} assigned to both {owner[c]} and {dom.id}")
            owner.setdefault(c, dom.id)
        if dom.kind == "vlib" and dom.port is None:
            errors.append(f"vlib domain {dom.id} needs a port")
    ports = [d.port for d in plat.domains if d.kind == "vlib"]
    if len(set(ports)) != len(ports):
        errors.append("vlib ports must be unique")
    domains = {d.id: d for d in plat.domains}
    thread_ids = [t.id for t in config.threads]
    if len(set(thread_ids)) != len(thread_ids):
        errors.append("thread ids must be unique")
    threads = {t.id: t for t in config.threads}
    vcpu_of: dict = {}
    for v in config.vcpus:
        label = f"vcpu {v.id}"
        if v.period_ms <= 0 or config.cycles(v.period_ms) <= 0:
            errors.append(f"{label}: period must be positive")
        if v.budget_ms < 0:
            errors.append(f"{label}: budget must be non-negative")
        if v.budget_ms > v.period_ms:
            errors.append(f"{label}: budget C={v.budget_ms} exceeds period T={v.period_ms}")
        if v.thread not in threads:
            errors.append(f"{label}: unknown thread {v.thread!r}")
        elif v.thread in vcpu_of:
            errors.append(f"{label}: thread {v.thread!r} already bound to vcpu {vcpu_of[v.thread]}")
        else:
            vcpu_of[v.thread] = v.id
            dom = threads[v.thread].domain
            if dom in domains and domains[dom].kind != "master":
                errors.append(f"{label}: thread {v.thread!r} is not in the master domain")
        if owner.get(v.core) not in [m.id for m in masters]:
            errors.append(f"{label}: core {v.core} is not a master core")
    if len({v.id for v in config.vcpus}) != len(config.vcpus):
        errors.append("vcpu ids must be unique")
    for t in config.threads:
        if t.domain not in domains:
            errors.append(f"thread {t.id}: unknown domain {t.domain!r}")
            continue
        dom = domains[t.domain]
        if dom.kind == "master" and t.id not in vcpu_of:
            errors.append(f"thread {t.id}: master threads must be bound to a vcpu")
        if dom.kind == "vlib":
            if t.core is None or t.core not in dom.cores:
                errors.append(f"thread {t.id}: needs a core of domain {dom.id}")
        if t.workload is not None:
            errors.extend(f"thread {t.id}: {e}" for e in t.workload.validate())
            if t.workload.kind == "periodic":
                p = t.workload.params
                if "period_ms" not in p or "work_cycles" not in p:
                    errors.append(f"thread {t.id}: periodic needs period_ms and work_cycles")
                elif p["work_cycles"] > config.cycles(p["period_ms"]):
                    errors.append(f"thread {t.id}: work_cycles exceeds period")
    vlib_ports = {d.port for d in plat.domains if d.kind == "vlib"}
    for i, c in enumerate(config.calls):
        label = f"calls[{i}]"
        if c.kind not in ("init", "call", "async", "donate", "destroy"):
            errors.append(f"{label}: unknown kind {c.kind!r}")
        if c.thread not in threads:
            errors.append(f"{label}: unknown thread {c.thread!r}")
        elif c.thread not in vcpu_of:
            errors.append(f"{label}: calling thread {c.thread!r} has no vcpu")
        if c.port not in vlib_ports:
            errors.append(f"{label}: no vlib domain listens on port {c.port}")
        if c.at_ms < 0:
            errors.append(f"{label}: negative issue time")
        if c.kind == "async":
            if not plat.async_enabled:
                errors.append(f"{label}: asynchronous calls are disabled")
            px = c.proxy or {}
            if not {"budget_ms", "period_ms", "core"} <= set(px):
                errors.append(f"{label}: async call needs proxy budget_ms, period_ms and core")
            elif owner.get(px["core"]) not in [m.id for m in masters]:
                errors.append(f"{label}: proxy core {px['core']} is not a master core")
    k = config.throttle.strength_k
    if not 0 <= k <= 1:
        errors.append("throttle.strength_k must lie in [0, 1]")
    if config.throttle.monitor_period_ms <= 0:
        errors.append("throttle.monitor_period_ms must be positive")
    if config.throttle.threshold(config.bus.base_service) <= 0:
        errors.append("throttle.latency_threshold must be positive")
    if config.compare is not None and config.compare.get("victim") not in vcpu_of:
        errors.append(f"compare.victim {config.compare.get('victim')!r} is not a vcpu-bound thread")
    for f in fields(OverheadTable):
        if getattr(config.overheads, f.name) < 0:
            errors.append(f"overheads.{f.name} must be non-negative")
    return errors


def lint(config: ScenarioConfig) -> list[str]:
    """Warnings for legal but suspicious scenarios."""
    warnings = []
    donated = {}
    for c in sorted(config.calls, key=lambda c: c.at_ms):
        if c.kind == "donate":
            donated.setdefault(c.port, c)
        elif c.kind in ("call", "async") and c.port in donated:
            d = donated[c.port]
            if c.at_ms >= d.at_ms:
                warnings.append(
                    f"call by {c.thread} on port {c.port} at {c.at_ms} ms follows a "
                    f"donation by {d.thread}; the vLib OS is locked and the call never completes")
    return warnings


def parse_dict(data: Any, source: str = "<scenario>") -> ScenarioConfig:
    validator = jsonschema.Draft202012Validator(schema())
    errors = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
              for e in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))]
    if errors:
        raise ScenarioError(errors, source)
    config = from_dict(data)
    errors = validate(config)
    if errors:
        raise ScenarioError(errors, source)
    return config


def parse_text(text: str, source: str = "<scenario>") -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"syntax error: {exc}"], source) from exc
    return parse_dict(data, source)


def parse_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario from a path or the name of a bundled scenario."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("vlibsim").joinpath("scenarios", f"{path}.yaml")
        if bundled.is_file():
            return parse_text(bundled.read_text(), str(path))
        raise ScenarioError([f"no such scenario file: {path}"], str(path))
    return parse_text(p.read_text(), str(p))


def bundled_scenarios() -> list[str]:
    root = resources.files("vlibsim").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _parse_value(value: Any) -> Any:
    if isinstance(value, str):
        v = value.strip()
        if v.endswith("%"):
            return float(v[:-1]) / 100.0
        try:
            return yaml.safe_load(v)
        except yaml.YAMLError:
            return v
    return value


def override(config: ScenarioConfig, path: str, value: Any) -> ScenarioConfig:
    """Copy of ``config`` with the dotted ``path`` set to ``value``.

    ``*`` matches every element of a list. The pseudo-field
    ``vcpus.<i>.utilization`` sets ``budget_ms = value * period_ms``.
    """
    data = to_dict(config)
    value = _parse_value(value)
    parts = path.split(".")
    targets = [data]
    for part in parts[:-1]:
        nxt = []
        for node in targets:
            if isinstance(node, list):
                if part == "*":
                    nxt.extend(node)
                else:
                    try:
                        nxt.append(node[int(part)])
                    except (ValueError, IndexError) as exc:
                        raise ScenarioError([f"invalid path {path!r}: no element {part!r}"]) from exc
            elif isinstance(node, dict) and part in node and node[part] is not None:
                nxt.append(node[part])
            else:
                raise ScenarioError([f"invalid path {path!r}: no field {part!r}"])
        targets = nxt
    leaf = parts[-1]
    for node in targets:
        if leaf == "utilization" and isinstance(node, dict) and "period_ms" in node:
            node["budget_ms"] = round(value * node["period_ms"], 9)
        elif isinstance(node, dict) and (leaf in node or _settable(parts)):
            node[leaf] = value
        else:
            raise ScenarioError([f"invalid path {path!r}: no field {leaf!r}"])
    return parse_dict(data, f"{config.name}[{path}={value}]")


def _settable(parts: list[str]) -> bool:
    return len(parts) >= 2 and parts[0] in ("throttle", "bus", "overheads", "platform")
