import pytest

from vlibsim import Simulator
from vlibsim.engine import SimulationError
from vlibsim.scenario import OverheadTable, lint
from vlibsim.vlibcall import ProtocolError
from tests.conftest import make_scenario

T2 = OverheadTable()
PATH = T2.vlib_call + T2.vm_entry + T2.vm_exit


def client_scenario(calls, *, budget=10, period=100, duration_ms=400, cycles_per_ms=10_000,
                    threads=None, vcpus=None, **kw):
    return make_scenario(vcpus or [(0, "client", budget, period, 0)], threads or [
        {"id": "client", "domain": "master"}], vlib=[("linux", 7, True)], calls=calls,
        duration_ms=duration_ms, cycles_per_ms=cycles_per_ms, **kw)


def run(cfg, until=None, tracing=True):
    sim = Simulator(cfg, tracing=tracing)
    if until is None:
        rep = sim.run()
        return sim, rep
    sim.run_until(until)
    return sim, None


def call(at, **kw):
    return {"at_ms": at, "thread": "client", "kind": "call", "port": 7, **kw}


def elapsed(rec):
    return rec["completed_at"] - rec["issued_at"]


def test_zero_work_round_trip_and_mapping_cost():
    _, rep = run(client_scenario([call(0), call(1), call(2)], duration_ms=5))
    assert [elapsed(c) for c in rep.calls] == [PATH + T2.channel_mapping, PATH, PATH]
    assert [c["mapping"] for c in rep.calls] == [2377, 0, 0]


def test_custom_overheads_flow_through():
    cfg = client_scenario([call(0), call(1)], duration_ms=5,
                          overheads={"vlib_call": 100, "vm_entry": 10, "vm_exit": 1,
                                     "remote_desched": 5, "channel_mapping": 0})
    _, rep = run(cfg)
    assert [elapsed(c) for c in rep.calls] == [111, 111]


def test_init_errors():
    sim = Simulator(client_scenario([]))
    client = sim.platform.threads["client"]
    ch = sim.protocol.vlib_init(client, 7)
    assert ch.state == "unmapped"
    with pytest.raises(ProtocolError):
        sim.protocol.vlib_init(client, 7)
    with pytest.raises(ProtocolError):
        sim.protocol.vlib_init(client, 99)


def test_destroy_then_call_errors():
    sim = Simulator(client_scenario([]))
    client = sim.platform.threads["client"]
    sim.protocol.vlib_init(client, 7)
    sim.protocol.vlib_channel_destroy(client, 7)
    with pytest.raises(ProtocolError):
        sim.protocol.vlib_call(client, 7)
    with pytest.raises(ProtocolError):
        sim.protocol.vlib_channel_destroy(client, 7)


def test_destroy_during_service_errors():
    sim, _ = run(client_scenario([call(0, demand_cycles=1_000_000)]), until=50_000)
    with pytest.raises(ProtocolError):
        sim.protocol.vlib_channel_destroy(sim.platform.threads["client"], 7)


def test_destroy_then_reinit_pays_mapping_again():
    calls = [call(0), {"at_ms": 1, "thread": "client", "kind": "destroy", "port": 7},
             {"at_ms": 2, "thread": "client", "kind": "init", "port": 7}, call(3)]
    _, rep = run(client_scenario(calls, duration_ms=5))
    assert [c["mapping"] for c in rep.calls] == [2377, 2377]


def test_parked_domain_issues_no_traffic():
    threads = [{"id": "client", "domain": "master"},
               {"id": "hog", "domain": "linux", "core": 1,
                "workload": {"kind": "batch_mem"}}]
    sim, rep = run(client_scenario([], threads=threads, duration_ms=20))
    assert sim.platform.domains["linux"].gate == "blocked"
    assert rep.bus_total == 0


def test_listen_after_service_signals_then_parks():
    sim, rep = run(client_scenario([call(0, demand_cycles=1000)], duration_ms=5))
    dom = sim.platform.domains["linux"]
    assert dom.gate == "blocked" and dom.server_state == "listening"
    lines = sim.engine.trace_lines()
    exit_at = next(int(l.split("\t")[0]) for l in lines if "\tvm_exit\t" in l)
    done_at = next(int(l.split("\t")[0]) for l in lines if "\tcall_completed\t" in l)
    park_at = next(int(l.split("\t")[0]) for l in lines if "\tpark" in l)
    assert done_at == park_at == exit_at + T2.vm_exit


def test_queued_requests_served_in_arrival_order():
    threads = [{"id": f"c{i}", "domain": "master"} for i in range(3)]
    vcpus = [(i, f"c{i}", 10, 100, i) for i in range(3)]
    calls = [{"at_ms": 0.01 * k, "thread": f"c{i}", "kind": "call", "port": 7,
              "demand_cycles": 20_000} for k, i in enumerate((2, 0, 1))]
    sim, rep = run(client_scenario(calls, threads=threads, vcpus=vcpus, duration_ms=20))
    order = [cid for _, _, cid in sim.protocol.service_log]
    enq = [cid for _, _, cid in sim.protocol.enqueue_log]
    assert order == enq
    assert [rep.calls[i]["client"] for i in order] == ["c2", "c0", "c1"]
    assert all(c["state"] == "completed" for c in rep.calls)


def test_service_spanning_periods_completes_in_third_period():
    # C = 10 ms, T = 100 ms, demand = 25 ms of server work
    cfg = client_scenario([call(0, demand_cycles=25 * 10_000)])
    sim, rep = run(cfg)
    c = rep.calls[0]
    period = 100 * 10_000
    assert c["state"] == "completed"
    assert 2 * period <= c["completed_at"] < 3 * period
    assert c["suspensions"] == 2
    assert c["serviced"] == 250_000


def test_null_timeout_waits_indefinitely():
    cfg = client_scenario([call(0, demand_cycles=60 * 10_000)], duration_ms=400)
    _, rep = run(cfg)
    assert rep.calls[0]["state"] == "servicing"
    assert rep.calls[0]["timeout"] is None


def test_timeout_abandons_and_marks_channel_stale():
    cfg = client_scenario([call(0, demand_cycles=60 * 10_000, timeout_ms=150)])
    sim, rep = run(cfg)
    c = rep.calls[0]
    assert c["state"] == "timed_out"
    assert elapsed(c) == 150 * 10_000
    dom = sim.platform.domains["linux"]
    assert dom.gate == "blocked" and dom.current is None
    ch = sim.protocol.channels[("client", 7)]
    assert ch.state == "stale"
    with pytest.raises(ProtocolError):
        sim.protocol.vlib_call(sim.platform.threads["client"], 7)


def test_stale_channel_is_recreated_by_next_scripted_call():
    cfg = client_scenario([call(0, demand_cycles=60 * 10_000, timeout_ms=5), call(10)])
    _, rep = run(cfg)
    assert [c["state"] for c in rep.calls] == ["timed_out", "completed"]
    assert rep.calls[1]["mapping"] == 2377


def test_remote_desched_costs_exactly_table_value():
    sim, _ = run(client_scenario([call(0, demand_cycles=200_000)]))
    lines = sim.engine.trace_lines()
    starts = [int(l.split("\t")[0]) for l in lines if "\tremote_desched\t" in l]
    ends = [int(l.split("\t")[0]) for l in lines if "\tgate_blocked" in l]
    assert starts and [e - s for s, e in zip(starts, ends)] == [T2.remote_desched] * len(starts)


def test_resume_pays_vm_entry_and_preserves_remainder():
    sim, rep = run(client_scenario([call(0, demand_cycles=250_000)]))
    lines = sim.engine.trace_lines()
    entries = [l for l in lines if "\tvm_entry\t" in l]
    assert len(entries) == 3 and all("cost=531" in l for l in entries)
    seg = rep.calls[0]["segments"]
    # server wall time inside segments covers mapping plus the whole demand
    assert sum(e - s for s, e in seg) == 250_000 + T2.channel_mapping


def test_server_usage_is_charged_to_client():
    cfg = client_scenario([call(0, demand_cycles=20_000, miss_interval=10)])
    sim, rep = run(cfg)
    v = sim.platform.vcpus[0]
    c = rep.calls[0]
    assert c["state"] == "completed" and c["suspensions"] >= 1
    assert c["charged_mem_requests"] == 2_000 == v.usage.mem_requests
    assert rep.bus_by_account == {"vcpu0": 2_000}
    assert c["charged_cycles"] <= v.usage.cpu_cycles


def test_preemption_deschedules_callee():
    threads = [{"id": "client", "domain": "master"},
               {"id": "urgent", "domain": "master", "workload": {"kind": "cpu_hog"}}]
    vcpus = [(0, "client", 50, 100, 0), (1, "urgent", 5, 20, 0)]
    sim, rep = run(client_scenario([call(1, demand_cycles=300_000)], threads=threads,
                                   vcpus=vcpus, duration_ms=100))
    c = rep.calls[0]
    assert c["state"] == "completed" and c["suspensions"] >= 1
    fg = [(s, e) for s, e, m in sim.platform.vcpus[0].run_log if m == "foreground"]
    for s, e in c["segments"]:
        assert any(a <= s and e <= b for a, b in fg)


def test_async_requires_flag():
    sim = Simulator(client_scenario([]))
    client = sim.platform.threads["client"]
    sim.protocol.vlib_init(client, 7)
    with pytest.raises(ProtocolError):
        sim.protocol.vlib_async_call(client, 7, proxy={"budget": 1, "period": 2, "core": 0})


def test_async_zero_work_callback_after_path_constants():
    threads = [{"id": "client", "domain": "master", "workload": {"kind": "cpu_hog"}}]
    calls = [{"at_ms": 1, "thread": "client", "kind": "async", "port": 7,
              "proxy": {"budget_ms": 2, "period_ms": 10, "core": 1}}]
    cfg = make_scenario([(0, "client", 5, 10, 0)], threads, vlib=[("linux", 7, True)],
                        calls=calls, duration_ms=5, cycles_per_ms=10_000,
                        platform={"async_enabled": True}, master_cores=[1])
    sim, rep = run(cfg)
    c = rep.calls[0]
    assert c["state"] == "completed" and elapsed(c) == PATH + T2.channel_mapping
    # the client kept computing while the proxy funded the service
    assert sim.platform.vcpus[0].usage.cpu_cycles == 50_000


def test_donation_runs_guests_only_in_donor_foreground():
    threads = [{"id": "donor", "domain": "master"},
               {"id": "hog", "domain": "linux", "core": 1,
                "workload": {"kind": "batch_mem", "miss_interval": 8}}]
    cfg = client_scenario([{"at_ms": 0, "thread": "donor", "kind": "donate", "port": 7}],
                          threads=threads, vcpus=[(0, "donor", 12, 40, 0)], duration_ms=160)
    sim, rep = run(cfg)
    fg = [(s, e) for s, e, m in sim.platform.vcpus[0].run_log if m == "foreground"]
    runs = [l.split("\t") for l in sim.engine.trace_lines() if l.split("\t")[2] == "hog"]
    assert runs
    starts = [int(r[0]) for r in runs if r[3] == "run"]
    stops = [int(r[0]) for r in runs if r[3] == "stop"]
    for s, e in zip(starts, stops):
        assert any(a <= s and e <= b for a, b in fg)
    assert rep.bus_by_account == {"vcpu0": rep.bus_total}
    assert sim.platform.domains["linux"].server_state == "terminated"


def test_unscheduled_donor_never_runs_domain():
    threads = [{"id": "donor", "domain": "master"},
               {"id": "hog", "domain": "linux", "core": 1, "workload": {"kind": "cpu_hog"}}]
    cfg = client_scenario([], threads=threads, vcpus=[(0, "donor", 12, 40, 0)], duration_ms=80)
    sim, rep = run(cfg)
    assert rep.thread("hog")["instructions"] == 0


def test_call_after_donation_never_completes_and_lints():
    threads = [{"id": "donor", "domain": "master"}, {"id": "client", "domain": "master"}]
    calls = [{"at_ms": 0, "thread": "donor", "kind": "donate", "port": 7}, call(5)]
    cfg = client_scenario(calls, threads=threads,
                          vcpus=[(0, "donor", 12, 40, 0), (1, "client", 5, 40, 1)],
                          duration_ms=200)
    assert any("locked" in w for w in lint(cfg))
    _, rep = run(cfg)
    assert rep.calls[1]["state"] == "queued"


def test_scripted_protocol_error_surfaces_with_context():
    calls = [{"at_ms": 0, "thread": "client", "kind": "destroy", "port": 7}]
    with pytest.raises(SimulationError, match="destroy"):
        run(client_scenario(calls, duration_ms=5))
