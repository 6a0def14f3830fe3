"""Shared scenario builders for the test suite."""

import pytest

from vlibsim.scenario import parse_dict


def make_scenario(vcpus, threads=None, *, cores=None, vlib=(), calls=(), duration_ms=100,
                  cycles_per_ms=1000, **extra):
    """Scenario with master cores 0..n-1 and optional vLib domains after them.

    ``vcpus`` items are ``(id, thread, C_ms, T_ms, core)``; threads default
    to CPU hogs. ``vlib`` items are ``(domain_id, port, server)``, one core
    each.
    """
    master = sorted({v[4] for v in vcpus} | set(extra.pop("master_cores", ()))) or [0]
    n_master = max(master) + 1
    domains = [{"id": "master", "kind": "master", "cores": list(range(n_master))}]
    for i, (dom, port, server) in enumerate(vlib):
        domains.append({"id": dom, "kind": "vlib", "cores": [n_master + i],
                        "port": port, "server": server})
    if threads is None:
        threads = [{"id": v[1], "domain": "master", "workload": {"kind": "cpu_hog"}}
                   for v in vcpus]
    platform = {"cores": cores or n_master + len(vlib), "cycles_per_ms": cycles_per_ms,
                "domains": domains}
    platform.update(extra.pop("platform", {}))
    data = {
        "name": extra.pop("name", "test"),
        "duration_ms": duration_ms,
        "platform": platform,
        "threads": threads,
        "vcpus": [{"id": i, "thread": t, "budget_ms": c, "period_ms": p, "core": k}
                  for i, t, c, p, k in vcpus],
        "calls": list(calls),
    }
    data.update(extra)
    return parse_dict(data)


@pytest.fixture
def scenario():
    return make_scenario


# acceptance criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key} {detail}")
