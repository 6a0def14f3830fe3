"""Synchronous calls into a legacy OS domain.

A master thread calls a parked vLib OS through a port. The call path costs
the hypervisor round trip; the first call on a channel also maps it. While
the server works, the client busy-waits and its VCPU budget pays for it."""

from vlibsim import Simulator, parse_scenario, parse_text, run_scenario

rep = run_scenario(parse_scenario("overhead_probe"), tracing=True)
for c in rep.calls:
    print(f"call {c['call']}: round trip {c['completed_at'] - c['issued_at']} cycles, "
          f"mapping {c['mapping']}")

print("\ntrace of the second call:")
for line in rep.trace:
    t = int(line.split("\t")[0])
    if 20000 <= t <= 25766:
        print("  ", line)

# A call that needs more than the client's budget is suspended when the
# budget runs out and resumes in the next period. The server runs only
# while its client is in foreground.
cfg = parse_text("""
name: long_call
duration_ms: 40
platform:
  cores: 2
  cycles_per_ms: 10000
  domains:
    - {id: master, kind: master, cores: [0]}
    - {id: linux, kind: vlib, cores: [1], port: 7, server: true}
threads:
  - {id: client, domain: master}
vcpus:
  - {id: 0, thread: client, budget_ms: 1, period_ms: 10, core: 0}
calls:
  - {at_ms: 0, thread: client, kind: call, port: 7, demand_cycles: 20000}
""")
sim = Simulator(cfg)
rep = sim.run()
call = sim.protocol.calls[0]
print("\nlong call:", call.state, "suspensions", call.suspensions,
      "serviced", call.serviced, "of", call.demand)
print("service segments:", call.segments)
print("client foreground intervals:",
      [(s, e) for s, e, m in sim.platform.vcpus[0].run_log if m == "foreground"])

# Timeouts bound the wait; the abandoned call leaves the channel stale.
rep = run_scenario(parse_scenario("calls_sync"))
for c in rep.calls:
    print(f"call {c['call']} by {c['client']}: {c['state']}")
