"""VCPU admission and the budget guarantee.

A VCPU (C, T) may run C cycles in foreground mode every T cycles. Per core,
a set is admitted if its utilization is under the rate-monotonic bound, or
up to 1.0 when all periods divide each other."""

import numpy as np

from vlibsim import Simulator, admit, hyperperiod, is_harmonic, parse_dict, rms_bound


def hogs(tasks, duration_ms, cycles_per_ms=100):
    """One core, one CPU-bound thread per (C, T) pair, times in ms."""
    return parse_dict({
        "name": "hogs", "duration_ms": duration_ms,
        "platform": {"cores": 1, "cycles_per_ms": cycles_per_ms,
                     "domains": [{"id": "master", "kind": "master", "cores": [0]}]},
        "threads": [{"id": f"t{i}", "domain": "master", "workload": {"kind": "cpu_hog"}}
                    for i in range(len(tasks))],
        "vcpus": [{"id": i, "thread": f"t{i}", "budget_ms": c, "period_ms": t, "core": 0}
                  for i, (c, t) in enumerate(tasks)],
    })

# The bound falls towards ln 2 as the number of VCPUs grows.
for n in (1, 2, 3, 10, 1000, 10**6):
    print(f"n={n:>7}  bound={rms_bound(n):.6f}")
print("ln 2      =", f"{np.log(2):.6f}")

# A non-harmonic set at 90% is rejected; a harmonic set at 100% is accepted.
print(admit([(3, 10), (4, 15), (2, 7)]))
print("harmonic:", is_harmonic([4, 8, 16]), admit([(1, 4), (2, 8), (4, 16), (4, 16)]))

# Simulate the harmonic set with CPU hogs for one hyperperiod. Every VCPU
# gets exactly its budget in every period: no deadline is missed.
tasks = [(1, 4), (2, 8), (4, 16), (4, 16)]
h = hyperperiod([t for _, t in tasks])
sim = Simulator(hogs(tasks, h))
sim.run()
for vid, v in sim.platform.vcpus.items():
    print(f"vcpu {vid} (C={v.budget}, T={v.period}) foreground per period:",
          [p.fg_cycles for p in v.periods if p.start < h * 100])

# Once a VCPU is out of budget it drops to background mode and shares idle
# time fairly with other background VCPUs.
rep = Simulator(hogs([(1, 10), (2, 10)], 10)).run()
for row in rep.vcpus:
    print(row["thread"], "C =", row["budget"], "fg", row["fg_cycles"], "bg", row["bg_cycles"])
