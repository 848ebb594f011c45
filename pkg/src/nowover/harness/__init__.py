"""Scenario runner, invariant sweeps, metrics and CLI."""

from .config import ConfigError, ScenarioConfig, ScheduledOp, from_mapping, load_config
from .engine import RunResult, initialize, run_crash_attack, run_scenario, run_targeted_attack, stream
from .metrics import MetricsStream, analyze, read_jsonl
from .snapshot import dumps_state, loads_state, read_state, write_state
from .sweeps import SweepReport, Violation, sweep_invariants

__all__ = [
    "ConfigError", "ScenarioConfig", "ScheduledOp", "from_mapping", "load_config",
    "RunResult", "initialize", "run_crash_attack", "run_scenario", "run_targeted_attack", "stream",
    "MetricsStream", "analyze", "read_jsonl",
    "dumps_state", "loads_state", "read_state", "write_state",
    "SweepReport", "Violation", "sweep_invariants",
]
