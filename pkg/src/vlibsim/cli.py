"""Command line: ``run``, ``sweep`` and ``validate`` over scenario files.

Exit codes: 0 success, 2 invalid scenario or arguments, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import report
from .engine import SimulationError
from .experiments import sweep
from .scenario import ScenarioError, lint, parse_scenario
from .simulator import run_scenario

EXIT_INVALID = 2
EXIT_RUNTIME = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vlibsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", help="scenario file or bundled scenario name")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default="out")
    r.add_argument("--trace", action="store_true", help="also write trace.tsv")

    s = sub.add_parser("sweep", help="run a scenario once per parameter value")
    s.add_argument("scenario")
    s.add_argument("--vary", required=True, help="dotted path, e.g. vcpus.*.utilization")
    s.add_argument("--values", required=True, help="comma-separated values, e.g. 10%%,30%%,60%%")
    s.add_argument("--out", default="sweep_out")
    s.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("validate", help="check a scenario and report every problem")
    v.add_argument("scenario")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario {exc.source}:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_INVALID
    for w in lint(config):
        print(f"warning: {w}", file=sys.stderr)
    try:
        if args.command == "validate":
            print(f"{config.name}: ok ({len(config.threads)} threads, "
                  f"{len(config.vcpus)} vcpus, digest {config.digest()[:12]})")
            return 0
        if args.command == "run":
            if args.seed is not None and args.seed < 0:
                raise ScenarioError(["--seed must be non-negative"], config.name)
            rep = run_scenario(config, args.seed, tracing=args.trace)
            paths = report.write(rep, args.out)
            print(f"{config.name}: {rep.duration} cycles simulated; wrote "
                  + ", ".join(p.name for p in paths))
            return 0
        values = [x for x in (s.strip() for s in args.values.split(",")) if x]
        _, text = sweep(config, args.vary, values, args.out, args.jobs)
        sys.stdout.write(text)
        return 0
    except ScenarioError as exc:
        print(f"invalid scenario {exc.source}:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        if exc.event is not None:
            print(f"  event: {exc.event}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
