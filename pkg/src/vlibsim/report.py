"""Run metrics and their on-disk form.

Every file uses fixed decimal notation so that identical runs produce
byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Union

from .membus import avg_latency

if TYPE_CHECKING:
    from .simulator import Simulator

GENERATOR_ID = "numpy.random.PCG64"


def fixed(value, places: int = 6) -> str:
    """Fixed-point text for numbers; empty for None."""
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{float(value):.{places}f}"


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    digest: str
    duration: int
    cycles_per_ms: int
    admission: dict
    vcpus: list = field(default_factory=list)
    threads: list = field(default_factory=list)
    calls: list = field(default_factory=list)
    bus: list = field(default_factory=list)
    throttle: list = field(default_factory=list)
    histograms: dict = field(default_factory=dict)
    periods: dict = field(default_factory=dict)
    trace: Optional[list] = None
    bus_total: int = 0
    bus_by_account: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)

    def vcpu(self, key) -> dict:
        """Row for a VCPU id or the id of its bound thread."""
        for row in self.vcpus:
            if row["vcpu"] == key or row["thread"] == key:
                return row
        raise KeyError(key)

    def fg_inst(self, key) -> int:
        return self.vcpu(key)["fg_instructions"]

    def thread(self, tid: str) -> dict:
        for row in self.threads:
            if row["thread"] == tid:
                return row
        raise KeyError(tid)

    @property
    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "config_digest": self.digest,
            "generator": GENERATOR_ID,
            "duration_cycles": self.duration,
            "cycles_per_ms": self.cycles_per_ms,
            "admission": self.admission,
            "bus_requests": self.bus_total,
            "bus_by_account": dict(sorted(self.bus_by_account.items())),
            "events": self.events,
            "vcpus": {str(r["vcpu"]): {k: r[k] for k in (
                "thread", "fg_cycles", "bg_cycles", "fg_instructions", "instructions",
                "mem_requests")} for r in self.vcpus},
            "calls": {
                "total": len(self.calls),
                "completed": sum(c["state"] == "completed" for c in self.calls),
                "timed_out": sum(c["state"] == "timed_out" for c in self.calls),
            },
            "throttle_triggered": sum(1 for d in self.throttle if d["triggered"]),
            "job_samples": {t: _sample_stats(s) for t, s in sorted(self.histograms.items())},
        }


def _sample_stats(samples: list) -> dict:
    if not samples:
        return {"count": 0}
    return {"count": len(samples), "min": min(samples), "max": max(samples),
            "mean": fixed(sum(samples) / len(samples))}


def collect(sim: "Simulator") -> MetricsReport:
    cfg = sim.config
    adm = sim.admission
    rep = MetricsReport(
        scenario=cfg.name, seed=sim.seed, digest=cfg.digest(),
        duration=cfg.duration_cycles, cycles_per_ms=cfg.platform.cycles_per_ms,
        admission={"accepted": adm.accepted, "reason": adm.reason or "",
                   "utilization": {str(k): fixed(v) for k, v in adm.utilization.items()}},
    )
    for vid, v in sorted(sim.platform.vcpus.items()):
        fg_per = [p.fg_cycles for p in v.periods]
        rep.vcpus.append({
            "vcpu": vid, "thread": v.thread.id, "core": v.core.id,
            "budget": v.budget, "period": v.period,
            "fg_cycles": v.fg_cycles, "bg_cycles": v.bg_cycles,
            "fg_instructions": sum(p.fg_instructions for p in v.periods),
            "instructions": sum(p.instructions for p in v.periods),
            "cpu_cycles": v.usage.cpu_cycles, "mem_requests": v.usage.mem_requests,
            "cache_bytes": v.usage.cache_bytes, "periods": len(v.periods),
            "min_period_fg": min(fg_per), "max_period_fg": max(fg_per),
        })
        rep.periods[vid] = [(p.index, p.start, p.fg_cycles, p.bg_cycles,
                             p.fg_instructions, p.instructions) for p in v.periods]
    for tid, th in sorted(sim.platform.threads.items()):
        cur = th.cursor
        rep.threads.append({
            "thread": tid, "domain": th.domain.id,
            "core": th.core.id if th.core is not None else None,
            "instructions": cur.instructions_retired if cur else 0,
            "fg_instructions": cur.fg_instructions if cur else 0,
            "requests": cur.requests if cur else 0,
            "stall_cycles": cur.stall_cycles if cur else 0,
        })
        samples = getattr(th.workload, "samples", None)
        if samples is not None:
            rep.histograms[tid] = list(samples)
    for c in sim.protocol.calls:
        rep.calls.append({
            "call": c.id, "kind": c.kind, "port": c.port, "client": c.client.id,
            "client_vcpu": c.client_vcpu, "issued_at": c.issued_at,
            "enqueued_at": c.enqueued_at, "first_service_at": c.first_service_at,
            "completed_at": c.completed_at, "state": c.state,
            "suspensions": c.suspensions, "charged_cycles": c.charged_cycles,
            "charged_mem_requests": c.charged_mem_requests, "demand": c.demand,
            "serviced": c.serviced, "mapping": c.prefix, "timeout": c.timeout,
            "segments": [tuple(s) for s in c.segments],
        })
    for w in sim.monitor.windows:
        rep.bus.append({"window_start": w.window_start, "window_end": w.window_end,
                        "occupancy": w.occupancy, "requests": w.requests,
                        "avg_latency": avg_latency(w)})
    for d in sim.monitor.decisions:
        rep.throttle.append({"window_start": d.window[0], "window_end": d.window[1],
                             "latency": d.latency, "triggered": d.triggered,
                             "durations": dict(d.per_core_durations)})
    rep.bus_total = sim.bus.total
    rep.bus_by_account = dict(sim.bus.by_account)
    eng = sim.engine
    rep.events = {"scheduled": eng.scheduled, "dispatched": eng.dispatched,
                  "cancelled": eng.cancelled, "pending": eng.pending_count}
    if eng.tracing:
        rep.trace = eng.trace_lines()
    return rep


def _csv(rows: list, header: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fixed(x) if not isinstance(x, str) else x for x in r])
    return buf.getvalue()


METRICS_COLUMNS = ["vcpu", "thread", "core", "budget", "period", "fg_cycles", "bg_cycles",
                   "fg_instructions", "instructions", "cpu_cycles", "mem_requests",
                   "cache_bytes", "periods", "min_period_fg", "max_period_fg"]
CALL_COLUMNS = ["call", "kind", "port", "client", "issued_at", "first_service_at",
                "completed_at", "state", "suspensions", "charged_cycles",
                "charged_mem_requests", "demand", "serviced", "mapping"]


def render(report: MetricsReport) -> dict:
    """File name to text content for every output of one run."""
    files = {
        "metrics.csv": _csv([[r[c] for c in METRICS_COLUMNS] for r in report.vcpus],
                            METRICS_COLUMNS),
        "calls.csv": _csv([[r[c] for c in CALL_COLUMNS] for r in report.calls], CALL_COLUMNS),
        "bus.csv": _csv([[r["window_start"], r["occupancy"], r["requests"], r["avg_latency"]]
                         for r in report.bus],
                        ["window_start", "occupancy", "requests", "avg_latency"]),
        "throttle.csv": _csv(
            [[r["window_start"], r["window_end"], r["latency"], int(r["triggered"]),
              ";".join(f"{c}:{d}" for c, d in sorted(r["durations"].items()))]
             for r in report.throttle],
            ["window_start", "window_end", "latency", "triggered", "durations"]),
        "summary.json": json.dumps(report.summary, indent=2, sort_keys=True) + "\n",
    }
    for tid, samples in sorted(report.histograms.items()):
        files[f"hist_{tid}.csv"] = _csv(list(enumerate(samples)), ["sample_index", "cycles"])
    if report.trace is not None:
        files["trace.tsv"] = "".join(line + "\n" for line in report.trace)
    return files


def write(report: MetricsReport, out_dir: Union[str, Path]) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in render(report).items():
        (out / name).write_text(text)
        written.append(out / name)
    return written
