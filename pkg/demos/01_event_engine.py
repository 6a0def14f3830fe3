"""The event engine: an integer cycle clock, a (time, sequence) ordered queue
and a seeded generator. Everything else in the simulator is built on it."""

from vlibsim import Engine, EventKind

eng = Engine(seed=7, tracing=True)
log = []

# Events at the same cycle fire in insertion order.
for name in ("first", "second", "third"):
    eng.schedule(100, EventKind.TIMER, log.append, name)
late = eng.schedule(500, EventKind.TIMER, log.append, "never")
eng.schedule(50, EventKind.TIMER, log.append, "early")

# Cancellation is lazy: the entry stays in the heap but is skipped.
eng.cancel(late)
eng.run_until(1000)
print("dispatch order:", log)
print("clock:", eng.now)

# The books always balance: scheduled = dispatched + cancelled + pending.
print("scheduled", eng.scheduled, "dispatched", eng.dispatched,
      "cancelled", eng.cancelled, "pending", eng.pending_count)

# The generator is PCG64, so the same seed gives the same stream.
a = Engine(seed=7).rng.integers(0, 1000, 5)
b = Engine(seed=7).rng.integers(0, 1000, 5)
print("seeded draws repeat:", a.tolist(), b.tolist())
