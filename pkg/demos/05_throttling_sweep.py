"""Protecting a memory-bound victim from a memory hog in a legacy domain.

Uncontrolled, the hog's traffic slows the victim. Putting the hog under
master control (a donor VCPU funds it) and throttling background cores when
bus latency is high recovers most of the loss, more so at low utilization."""

import tempfile

from vlibsim import parse_scenario
from vlibsim.experiments import sweep

cfg = parse_scenario("jump_u10")
with tempfile.TemporaryDirectory() as out:
    rows, table = sweep(cfg, "vcpus.*.utilization", ["10%", "30%", "60%"], out)
print(table)
for value, rep, cmp_ in rows:
    print(f"U={value}: slowdown {cmp_.slowdown_uncontrolled:.1%} -> "
          f"{cmp_.slowdown_controlled:.1%}, reduction {cmp_.reduction:.1%}; "
          f"{sum(d['triggered'] for d in rep.throttle)} throttled windows")
