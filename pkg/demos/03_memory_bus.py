"""The shared memory bus and its PMU-style counters.

The bus serves requests first-come first-served. Occupancy integrates the
number of pending requests over time; divided by the arrival count it gives
the average request latency, which is what the throttling monitor reads."""

from vlibsim import MemoryBus, avg_latency, window_counters

# Three requests: one short, two overlapping long ones.
c = window_counters([(0, 2), (1, 5), (1, 5)], 0, 5)
print(c, "average latency:", avg_latency(c))

# Queueing on the bus: requests arriving together wait for each other.
bus = MemoryBus(base_service=40)
for core in (0, 1, 2, 3):
    done = bus.issue(0, core, f"vm{core}")
    print(f"core {core} request done at {done}")
w = bus.counters_for(0, 1000)
print("window:", w, "latency:", float(avg_latency(w)))

# The same four requests spread out never queue: latency is the bare service time.
bus = MemoryBus(base_service=40)
for core in (0, 1, 2, 3):
    bus.issue(100 * core, core, f"vm{core}")
print("spread out latency:", float(avg_latency(bus.counters_for(0, 1000))))
