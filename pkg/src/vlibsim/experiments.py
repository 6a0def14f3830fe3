"""Parameter sweeps and the slowdown comparison used by the jump family.

Slowdown of a victim is its relative loss of foreground instructions
against running alone; the reduction compares a controlled co-runner setup
with an uncontrolled one::

    slowdown  = (fg_alone - fg) / fg_alone
    reduction = (slowdown_uncontrolled - slowdown_controlled) / slowdown_uncontrolled
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from . import report as report_mod
from .report import MetricsReport, fixed
from .scenario import ScenarioConfig, ScenarioError, override, parse_scenario
from .simulator import run_scenario


def slowdown(fg: int, fg_alone: int) -> float:
    if fg_alone <= 0:
        raise ValueError("baseline foreground instruction count must be positive")
    return (fg_alone - fg) / fg_alone


def slowdown_reduction(fg_controlled: int, fg_uncontrolled: int, fg_alone: int) -> Optional[float]:
    """Fraction of the uncontrolled slowdown removed by control; None if there is none."""
    s_unc = slowdown(fg_uncontrolled, fg_alone)
    if s_unc <= 0:
        return None
    return (s_unc - slowdown(fg_controlled, fg_alone)) / s_unc


@dataclass
class Comparison:
    value: object
    alone: int
    uncontrolled: int
    controlled: int

    @property
    def slowdown_uncontrolled(self) -> float:
        return slowdown(self.uncontrolled, self.alone)

    @property
    def slowdown_controlled(self) -> float:
        return slowdown(self.controlled, self.alone)

    @property
    def reduction(self) -> Optional[float]:
        return slowdown_reduction(self.controlled, self.uncontrolled, self.alone)


def _apply(config: ScenarioConfig, path: Optional[str], value) -> ScenarioConfig:
    return config if path is None else override(config, path, value)


def _baseline(name: str, path: Optional[str], value) -> ScenarioConfig:
    base = parse_scenario(name)
    try:
        return _apply(base, path, value)
    except ScenarioError:
        # the varied parameter does not exist in this baseline
        return base


def compare(config: ScenarioConfig, path: Optional[str] = None, value=None,
            controlled: Optional[MetricsReport] = None) -> Comparison:
    """Run ``config``'s declared baselines (with the same override) and compare."""
    plan = config.compare
    if not plan:
        raise ScenarioError(["scenario declares no compare section"], config.name)
    victim = plan["victim"]
    if controlled is None:
        controlled = run_scenario(config)
    alone = run_scenario(_baseline(plan["alone"], path, value))
    unc = run_scenario(_baseline(plan["uncontrolled"], path, value))
    return Comparison(value, alone.fg_inst(victim), unc.fg_inst(victim),
                      controlled.fg_inst(victim))


def _run_one(args):
    config, path, value = args
    cfg = override(config, path, value)
    rep = run_scenario(cfg)
    cmp_ = compare(cfg, path, value, rep) if cfg.compare else None
    return rep, cmp_


def sweep(config: ScenarioConfig, path: str, values: Sequence, out_dir: Union[str, Path, None] = None,
          jobs: int = 1) -> tuple[list, str]:
    """One run per value. Returns ``([(value, report, comparison)], comparison_csv)``."""
    values = list(values)
    if not values:
        raise ScenarioError(["sweep needs at least one value"], config.name)
    for v in values:
        override(config, path, v)  # fail fast on a bad path or value
    tasks = [(config, path, v) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    rows = [(v, rep, cmp_) for v, (rep, cmp_) in zip(values, results)]
    text = comparison_csv(path, rows)
    if out_dir is not None:
        out = Path(out_dir)
        for i, (v, rep, _) in enumerate(rows):
            report_mod.write(rep, out / f"run_{i:03d}_{_slug(v)}")
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.csv").write_text(text)
    return rows, text


def _slug(value) -> str:
    return "".join(ch if ch.isalnum() or ch in "-." else "_" for ch in str(value))


def comparison_csv(path: str, rows: list) -> str:
    threads = [r["thread"] for r in rows[0][1].vcpus] if rows else []
    header = [path] + [f"fg_inst_{t}" for t in threads]
    with_cmp = any(c is not None for _, _, c in rows)
    if with_cmp:
        header += ["alone_fg_inst", "uncontrolled_fg_inst", "controlled_fg_inst",
                   "slowdown_uncontrolled", "slowdown_controlled", "slowdown_reduction"]
    lines = [",".join(header)]
    for v, rep, c in rows:
        cells = [str(v)] + [str(rep.fg_inst(t)) for t in threads]
        if with_cmp:
            cells += [str(c.alone), str(c.uncontrolled), str(c.controlled),
                      fixed(c.slowdown_uncontrolled), fixed(c.slowdown_controlled),
                      fixed(c.reduction)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
