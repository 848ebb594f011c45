"""Static Byzantine adversary: who is corrupted, and how corrupted nodes act.

Corruption is decided once per node, at start-up or when the node joins,
and never changes afterwards. The number of live corrupted nodes is capped
at ``floor(tau * n_max)`` where ``n_max`` is the configured population ceiling.

Behaviour is a set of flags consulted at fixed decision points:

* ``SILENT``          corrupted nodes drop everything they should forward
* ``EQUIVOCATE``      corrupted nodes send conflicting payloads / forged rosters
* ``WITHHOLD_REVEAL`` corrupted nodes skip reveals to steer shared randomness
* ``HIJACK``          a malicious-majority cluster ends any walk entering it
                      and rigs the swaps it is party to
* ``TARGETED_JOIN_LEAVE`` / ``CRASH_ATTACK`` mark the scripted attacks below
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

import numpy as np

from .graph import Graph


class Behavior(enum.Flag):
    NONE = 0
    SILENT = enum.auto()
    EQUIVOCATE = enum.auto()
    WITHHOLD_REVEAL = enum.auto()
    HIJACK = enum.auto()
    TARGETED_JOIN_LEAVE = enum.auto()
    CRASH_ATTACK = enum.auto()

    @classmethod
    def parse(cls, names: Iterable[str]) -> "Behavior":
        out = cls.NONE
        for name in names:
            out |= cls[name.strip().upper()]
        return out


class JoinRule(enum.Enum):
    NEVER = "never"
    PROBABILISTIC = "probabilistic"
    BUDGETED_TARGETED = "budgeted_targeted"


class AssumptionViolated(RuntimeError):
    pass


@dataclass(frozen=True)
class AdversaryPolicy:
    tau: float = 0.0
    corrupt_on_join: JoinRule = JoinRule.PROBABILISTIC
    behavior: Behavior = Behavior.NONE
    target: Hashable | None = None
    crash_epsilon: float | None = None
    initial_selection: str = "uniform"

    def __post_init__(self):
        if not 0 <= self.tau < 0.5:
            raise ValueError("tau must lie in [0, 0.5)")

    def limit(self, n_max: int) -> int:
        return math.floor(self.tau * n_max + 1e-9)


@dataclass
class CorruptionLedger:
    corrupted: set = field(default_factory=set)
    departed: set = field(default_factory=set)
    budget_used: int = 0
    limit: int = 0

    @property
    def live_count(self) -> int:
        return len(self.corrupted) - len(self.departed)

    def mark(self, node) -> None:
        if node in self.corrupted:
            raise ValueError(f"node {node!r} already corrupted")
        self.corrupted.add(node)
        self.budget_used += 1

    def depart(self, node) -> None:
        if node in self.corrupted:
            self.departed.add(node)

    def __contains__(self, node) -> bool:
        return node in self.corrupted


def corrupt_initial(
    nodes: Iterable,
    policy: AdversaryPolicy,
    rng: np.random.Generator,
    *,
    n_max: int | None = None,
    graph: Graph | None = None,
    demo: bool = False,
) -> CorruptionLedger:
    """Corrupt exactly ``floor(tau * |nodes|)`` nodes.

    Uniform selection draws a random subset. ``"max_degree"`` selection takes
    the best-connected nodes of ``graph``, the kind of choice that can cut
    honest nodes apart; that is refused unless ``demo`` is set.
    """
    nodes = list(nodes)
    count = policy.limit(len(nodes))
    ledger = CorruptionLedger(limit=policy.limit(n_max if n_max is not None else len(nodes)))
    if count == 0:
        return ledger
    if policy.initial_selection == "uniform":
        picked = [nodes[i] for i in rng.choice(len(nodes), size=count, replace=False)]
    elif policy.initial_selection == "max_degree":
        if graph is None:
            raise ValueError("targeted selection needs the node graph")
        picked = sorted(nodes, key=lambda v: (-graph.degree(v), str(v)))[:count]
    else:
        raise ValueError(f"unknown selection {policy.initial_selection!r}")
    for v in picked:
        ledger.mark(v)
    if graph is not None and not demo and not honest_connected(graph, ledger.corrupted):
        raise AssumptionViolated("assumption violated: honest nodes are disconnected")
    return ledger


def honest_connected(graph: Graph, corrupted) -> bool:
    honest = [v for v in graph.vertices if v not in corrupted]
    if len(honest) <= 1:
        return True
    seen = {honest[0]}
    stack = [honest[0]]
    while stack:
        x = stack.pop()
        for y in graph.neighbors(x):
            if y not in corrupted and y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(honest)


def decide_on_join(
    new_node,
    ledger: CorruptionLedger,
    policy: AdversaryPolicy,
    live_n: int,
    rng: np.random.Generator,
) -> bool:
    """Return True if the joining node is corrupted (and record it)."""
    if policy.corrupt_on_join is JoinRule.NEVER or policy.tau == 0:
        return False
    if ledger.live_count + 1 > ledger.limit:
        return False
    if policy.corrupt_on_join is JoinRule.PROBABILISTIC and rng.random() >= policy.tau:
        return False
    ledger.mark(new_node)
    return True


class Commitment:
    """Binding, hiding commitment to a value; only the owner can open it."""

    __slots__ = ("_value", "digest")

    def __init__(self, value, nonce: bytes):
        self._value = value
        self.digest = hashlib.blake2b(nonce, digest_size=16).hexdigest()

    def open(self):
        return self._value


class Adversary:
    """Policy, ledger and the decision hooks invoked by the protocols."""

    def __init__(self, policy: AdversaryPolicy | None = None, ledger: CorruptionLedger | None = None, rng=None):
        self.policy = policy or AdversaryPolicy()
        self.ledger = ledger or CorruptionLedger()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.prefer: Callable | None = None
        self.withheld_reveals = 0
        self.hijacked_walks = 0

    @property
    def behavior(self) -> Behavior:
        return self.policy.behavior

    def has(self, flag: Behavior) -> bool:
        return bool(self.policy.behavior & flag)

    def is_corrupted(self, node) -> bool:
        return node in self.ledger.corrupted

    @property
    def interferes_with_randomness(self) -> bool:
        return self.has(Behavior.EQUIVOCATE) or self.has(Behavior.WITHHOLD_REVEAL)

    # -- shared randomness ----------------------------------------------------
    def commit_values(self, r: int, shape, honest_commitments: list) -> np.ndarray:
        """Values corrupted members commit to. Only digests of honest values are visible."""
        if not self.has(Behavior.EQUIVOCATE):
            return self.rng.integers(0, r, size=shape) if r < 2**63 else None
        # a fixed function of what the adversary sees; the digests carry no value information
        seed = int(hashlib.blake2b("".join(c.digest for c in honest_commitments).encode(), digest_size=8).hexdigest(), 16)
        return np.random.default_rng(seed).integers(0, r, size=shape)

    def choose_reveals(self, honest_total, mal_values: list, r: int) -> list[bool]:
        """Pick which corrupted reveals to publish after seeing the honest ones."""
        m = len(mal_values)
        if not self.has(Behavior.WITHHOLD_REVEAL) or m == 0:
            return [True] * m
        prefer = self.prefer or _prefer_zero
        free = min(m, 10)
        best, best_mask = None, None
        for mask in range(1 << free):
            total = honest_total
            for i in range(m):
                if i >= free or (mask >> i) & 1:
                    total = total + mal_values[i]
            score = prefer(total % r)
            if best is None or score > best:
                best, best_mask = score, mask
        keep = [i >= free or bool((best_mask >> i) & 1) for i in range(m)]
        self.withheld_reveals += keep.count(False)
        return keep

    # -- walks and messages ----------------------------------------------------
    @property
    def hijacks(self) -> bool:
        return self.has(Behavior.HIJACK)

    def hijack_replacement(self, members: list, exclude: set, malicious: int):
        """Member a hijacking cluster hands out in a rigged swap.

        Corrupted members are pushed out only while the cluster keeps its
        majority after the swap; otherwise an honest member goes.
        """
        give_bad = 2 * (malicious - 1) > len(members)
        pool = [x for x in members if (x in self.ledger.corrupted) == give_bad and x not in exclude]
        if not pool:
            return None
        return pool[int(self.rng.integers(len(pool)))]

    def hijack_sample(self, members: list):
        """Member a hijacking cluster names when asked for a random peer."""
        return self.hijack_replacement(members, set(), len(members) + 1)

    def forwards(self, node) -> bool:
        return not (self.has(Behavior.SILENT) and node in self.ledger.corrupted)


def _prefer_zero(value) -> float:
    if isinstance(value, np.ndarray):
        return float(np.sum(value == 0))
    return float(value == 0)


# -- scripted attacks ---------------------------------------------------------------


@dataclass
class AttackOutcome:
    captured_at: int | None
    ops: int
    target: Hashable
    peak_fraction: float
    retargets: int = 0
    corrupted_created: int = 0


def targeted_join_leave_attack(state, target, ops: int, exchange_enabled: bool, rng: np.random.Generator, *, on_step=None) -> AttackOutcome:
    """Churn corrupted identities until ``target`` holds a malicious majority.

    Alternates two moves: a corrupted node sitting outside the target leaves,
    then a fresh corrupted node joins (contact cluster chosen at random).
    Corrupted nodes that land in the target stay. Honest nodes do not churn.
    If a merge deletes the target, the attack moves on to a random cluster.
    """
    from . import now

    adv = state.adversary
    params = state.params
    state.params = params.replace(exchange=exchange_enabled)
    peak = 0.0
    retargets = 0
    created_before = adv.ledger.budget_used

    def outcome(at, done):
        return AttackOutcome(at, done, target, peak, retargets, adv.ledger.budget_used - created_before)

    try:
        for op in range(1, ops + 1):
            state.step += 1
            if target not in state.clusters:
                cids = sorted(state.clusters)
                target = cids[int(adv.rng.integers(len(cids)))]
                retargets += 1
            outside = sorted(
                x for x in adv.ledger.corrupted
                if x not in adv.ledger.departed and state.node_index.get(x) != target
            )
            can_join = adv.ledger.live_count < adv.ledger.limit
            if outside and (op % 2 == 1 or not can_join):
                now.leave(state, outside[int(rng.integers(len(outside)))], rng)
            elif can_join:
                node = state.new_node_id()
                adv.ledger.mark(node)
                cids = sorted(state.clusters)
                now.join(state, node, cids[int(rng.integers(len(cids)))], rng)
            if target not in state.clusters:
                continue
            c = state.clusters[target]
            peak = max(peak, c.malicious / len(c.members))
            if on_step is not None:
                on_step(op, state)
            if 2 * c.malicious > len(c.members):
                return outcome(op, op)
        return outcome(None, ops)
    finally:
        state.params = params


@dataclass
class CrashReport:
    crashed: list
    dead_clusters: list
    flipped_clusters: list
    survivors_checked: int


def crash_attack(state, epsilon: float, rng: np.random.Generator, *, victims: list | None = None) -> CrashReport:
    """Crash ``floor(epsilon * n)`` uniformly random live nodes at once.

    Clusters keeping at most half their members are declared dead: their
    overlay vertex is dropped without repair and the survivors rejoin. The
    other clusters treat each crash as a leave. ``flipped_clusters`` lists
    surviving clusters that went from honest to malicious majority.
    """
    from . import now

    if not 0 < epsilon < 1 and victims is None:
        raise ValueError("epsilon must lie in (0, 1)")
    live = sorted(state.node_index)
    if victims is None:
        count = max(1, math.floor(epsilon * len(live)))
        victims = [live[i] for i in rng.choice(len(live), size=count, replace=False)]
    return now.crash_nodes(state, victims, rng)
