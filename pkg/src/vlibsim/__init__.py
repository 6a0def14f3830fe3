"""Discrete-event simulator of a real-time master OS that schedules
legacy OS domains as callable libraries."""

from .engine import Engine, EventKind, SimulationError
from .membus import BusCounters, MemoryBus, avg_latency, window_counters
from .platform import admit, build_platform, hyperperiod, is_harmonic, rms_bound
from .report import MetricsReport
from .scenario import (OverheadTable, ScenarioConfig, ScenarioError, bundled_scenarios,
                       override, parse_dict, parse_scenario, parse_text, serialize)
from .simulator import Simulator, run_scenario
from .throttle import ThrottleDecision, ThrottlePolicy, decide
from .vlibcall import ProtocolError

__all__ = [
    "BusCounters", "Engine", "EventKind", "MemoryBus", "MetricsReport", "OverheadTable",
    "ProtocolError", "ScenarioConfig", "ScenarioError", "SimulationError", "Simulator",
    "ThrottleDecision", "ThrottlePolicy", "admit", "avg_latency", "build_platform",
    "bundled_scenarios", "decide", "hyperperiod", "is_harmonic", "override",
    "parse_dict", "parse_scenario", "parse_text", "rms_bound", "run_scenario", "serialize",
    "window_counters",
]
