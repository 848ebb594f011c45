"""Scenario configuration: YAML in, validated dataclass out.

A config file has a few nested sections; every key is optional::

    seed: 7
    params:     {lam: 2, k: 2, l: 1.5, tau: 0.1, epsilon: 0.1, delta: 0.01, c: 4}
    population: {n_initial: 64, n_max: 80, n_min: 48}
    churn:
      ops: 500            # random join/leave operations
      p_join: 0.5
      schedule:           # explicit operations at given steps
        - {step: 10, op: app_call, args: {app: broadcast_local}}
        - {step: 20, op: crash_attack, args: {epsilon: 0.1}}
    adversary:  {join_rule: probabilistic, behavior: [hijack], selection: uniform}
    run:        {batch_size: 1, metrics_every: 50, lambda2_every: 50,
                 walk_mode: auto, bias: uniform, exchange: true, delay: 0}
    sweeps: [partition, size_band, views, overlay]
    overrides:  {unsafe_tau: false, small_l: false, demo: false}
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

SWEEPS = ("partition", "size_band", "views", "overlay", "honest_majority")
OPS = ("join", "leave", "crash_attack", "app_call")
APPS = ("broadcast_local", "broadcast_global", "agree", "aggregate", "sample")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class ScheduledOp:
    step: int
    op: str
    args: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    seed: int = 0
    lam: int = 2
    k: int = 2
    l: float = 1.5
    tau: float = 0.0
    epsilon: float = 0.1
    delta: float = 0.01
    c: float = 4.0
    size_exponent: int = 2
    n_initial: int = 64
    n_max: int | None = None
    n_min: int | None = None
    ops: int = 0
    p_join: float = 0.5
    schedule: list = field(default_factory=list)
    join_rule: str = "probabilistic"
    behavior: list = field(default_factory=list)
    target: int | None = None
    selection: str = "uniform"
    batch_size: int = 1
    metrics_every: int = 50
    lambda2_every: int | None = None
    walk_mode: str = "auto"
    bias: str = "uniform"
    exchange: bool = True
    delay: int = 0
    node_graph_p: float | None = None
    sweeps: list = field(default_factory=lambda: ["partition", "size_band", "views", "overlay"])
    unsafe_tau: bool = False
    small_l: bool = False
    demo: bool = False

    def __post_init__(self):
        self.schedule = [s if isinstance(s, ScheduledOp) else ScheduledOp(**s) for s in self.schedule]
        if self.n_max is None:
            self.n_max = self.n_initial
        if self.n_min is None:
            self.n_min = min(self.n_initial, 2 * self.base_size)
        if self.lambda2_every is None:
            self.lambda2_every = self.metrics_every

    @property
    def base_size(self) -> int:
        return self.k * self.lam**self.size_exponent

    @property
    def total_steps(self) -> int:
        scheduled = max((s.step for s in self.schedule), default=0)
        spacing = max(self.delay, 1)
        return max(math.ceil(self.ops / self.batch_size) * spacing, scheduled)

    def validate(self) -> None:
        p = []
        if self.lam < 1:
            p.append("params.lam: must be a positive integer")
        if self.k < 1:
            p.append("params.k: must be a positive integer")
        if self.l <= math.sqrt(2) and not self.small_l:
            p.append("params.l: must exceed sqrt(2) (set overrides.small_l to allow)")
        if not 0 <= self.tau < 0.5:
            p.append("params.tau: must lie in [0, 0.5)")
        elif self.tau > 1 / (2 * self.l**2) - self.epsilon + 1e-12 and not self.unsafe_tau:
            p.append("params.tau: exceeds 1/(2 l^2) - epsilon (set overrides.unsafe_tau to allow)")
        if not 0 < self.delta < 1:
            p.append("params.delta: must lie in (0, 1)")
        if self.c <= 0:
            p.append("params.c: must be positive")
        if self.size_exponent < 1:
            p.append("params.size_exponent: must be >= 1")
        elif self.n_initial < 2 * self.base_size:
            p.append(f"population.n_initial: must be at least 2*k*lam^{self.size_exponent} = {2 * self.base_size}")
        if self.n_max < self.n_initial:
            p.append("population.n_max: must be at least n_initial")
        if self.n_min > self.n_initial:
            p.append("population.n_min: must not exceed n_initial")
        if self.ops < 0:
            p.append("churn.ops: must be non-negative")
        if not 0 <= self.p_join <= 1:
            p.append("churn.p_join: must lie in [0, 1]")
        for i, s in enumerate(self.schedule):
            if s.op not in OPS:
                p.append(f"churn.schedule[{i}].op: unknown operation {s.op!r}")
            if s.step < 1:
                p.append(f"churn.schedule[{i}].step: must be >= 1")
            if s.op == "app_call" and s.args.get("app") not in APPS:
                p.append(f"churn.schedule[{i}].args.app: must be one of {', '.join(APPS)}")
        if self.join_rule not in ("never", "probabilistic", "budgeted_targeted"):
            p.append(f"adversary.join_rule: unknown rule {self.join_rule!r}")
        from ..adversary import Behavior

        for i, b in enumerate(self.behavior):
            if b.upper() not in Behavior.__members__:
                p.append(f"adversary.behavior[{i}]: unknown behaviour {b!r}")
        if self.batch_size < 1:
            p.append("run.batch_size: must be >= 1")
        if self.metrics_every < 1:
            p.append("run.metrics_every: must be >= 1")
        if self.walk_mode not in ("protocol", "hop", "exact", "auto"):
            p.append(f"run.walk_mode: unknown mode {self.walk_mode!r}")
        if self.bias not in ("uniform", "cluster_size_weighted"):
            p.append(f"run.bias: unknown bias {self.bias!r}")
        if self.selection not in ("uniform", "max_degree"):
            p.append(f"adversary.selection: unknown selection {self.selection!r}")
        if self.delay < 0:
            p.append("run.delay: must be non-negative")
        for i, s in enumerate(self.sweeps):
            if s not in SWEEPS:
                p.append(f"sweeps[{i}]: unknown sweep {s!r}")
        if p:
            raise ConfigError(p)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "params": ("lam", "k", "l", "tau", "epsilon", "delta", "c", "size_exponent"),
    "population": ("n_initial", "n_max", "n_min"),
    "churn": ("ops", "p_join", "schedule"),
    "adversary": ("join_rule", "behavior", "target", "tau", "selection"),
    "run": ("batch_size", "metrics_every", "lambda2_every", "walk_mode", "bias", "exchange", "delay", "node_graph_p"),
    "overrides": ("unsafe_tau", "small_l", "demo"),
}


def from_mapping(doc: dict[str, Any]) -> ScenarioConfig:
    problems = []
    flat: dict[str, Any] = {}
    for key, value in (doc or {}).items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"{key}: expected a mapping")
                continue
            for sub, v in value.items():
                if sub not in _SECTIONS[key]:
                    problems.append(f"{key}.{sub}: unknown key")
                else:
                    flat[sub] = v
        elif key in ("seed", "sweeps"):
            flat[key] = value
        else:
            problems.append(f"{key}: unknown section")
    if problems:
        raise ConfigError(problems)
    try:
        cfg = ScenarioConfig(**flat)
    except TypeError as exc:
        raise ConfigError([str(exc)]) from None
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path) as fh:
        return from_mapping(yaml.safe_load(fh))
