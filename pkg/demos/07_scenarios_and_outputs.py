"""Scenario files, overrides and the output files of a run.

Scenarios are YAML. Any field can be overridden by a dotted path, which is
what sweeps use. A run writes CSV and JSON files that are byte-identical for
the same scenario and seed."""

import tempfile
from pathlib import Path

from vlibsim import bundled_scenarios, override, parse_scenario, run_scenario
from vlibsim.cli import main
from vlibsim.report import render, write

print("bundled:", ", ".join(bundled_scenarios()))

cfg = parse_scenario("jump_u10")
cfg30 = override(cfg, "vcpus.*.utilization", "30%")
print("victim budget at 30%:", cfg30.vcpus[0].budget_ms, "ms of", cfg30.vcpus[0].period_ms)

rep = run_scenario(cfg, tracing=True)
with tempfile.TemporaryDirectory() as out:
    for p in write(rep, out):
        print(f"{p.name:14s} {p.stat().st_size:>8d} bytes")
    print(Path(out, "metrics.csv").read_text())
print("identical rerun:", render(rep) == render(run_scenario(cfg, tracing=True)))

# The same runs are available as the `vlibsim` command.
main(["validate", "lidar_darknet_mem"])
