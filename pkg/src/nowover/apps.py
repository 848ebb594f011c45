"""Applications on the clustered overlay: broadcast, agreement, sum
aggregation and peer sampling.

Inter-cluster traffic is push gossip at cluster granularity: in every round
each cluster holding a value picks a neighbour with ``rand_num`` and all its
members send the value there. The receiving cluster accepts only what more
than half of the sender's members (per its neighbour view) sent identically.
A push costs ``|C| * |D|`` message units.

Gossip runs for ``ceil(c * (lam + ln(1/delta)) * lam**2)`` rounds, taking
``1 / lam**2`` as the conductance floor of the overlay.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping

import numpy as np

from .adversary import Adversary, Behavior
from .now import CLOCK_BITS, PartitionState, rand_bits, rand_cl, rand_num

HASH_KEY = b"nowover-hash-v1"
BOGUS = b"\x00forged"


@dataclass
class BroadcastOutcome:
    delivered: dict
    aborted: bool
    rounds: int
    messages: float
    payload_bits: int = 0
    alarms: list = field(default_factory=list)

    def honest_values(self, state: PartitionState) -> set:
        return {v for x, v in self.delivered.items() if not state.is_corrupted(x)}

    def record(self) -> dict:
        digest = hashlib.blake2b(
            json.dumps(sorted((str(k), _hex(v)) for k, v in self.delivered.items())).encode(), digest_size=8
        ).hexdigest()
        return {
            "kind": "broadcast",
            "rounds": self.rounds,
            "messages": self.messages,
            "payload_bits": self.payload_bits,
            "delivered": sum(v is not None for v in self.delivered.values()),
            "delivery_digest": digest,
            "aborted": self.aborted,
        }


@dataclass
class AgreeOutcome:
    decided: int | None
    outputs: dict
    rounds: int
    messages: float
    initiators: list
    windows: int

    def record(self) -> dict:
        return {
            "kind": "agree",
            "decided": self.decided,
            "rounds": self.rounds,
            "messages": self.messages,
            "initiating_clusters": len(self.initiators),
            "windows": self.windows,
        }


@dataclass
class AggregateOutcome:
    estimate: float
    true_sum: float
    r: int
    w_mins: np.ndarray
    rounds: int = 0
    messages: float = 0.0
    converged: bool = True

    def record(self) -> dict:
        return {
            "kind": "aggregate",
            "estimate": self.estimate,
            "true_sum": self.true_sum,
            "r": self.r,
            "rounds": self.rounds,
            "messages": self.messages,
            "converged": self.converged,
        }


def _hex(v):
    if v is None:
        return None
    return v.hex() if isinstance(v, (bytes, bytearray)) else repr(v)


def gossip_rounds(lam: int, delta: float, c: float) -> int:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.ceil(c * (lam + math.log(1 / delta)) * lam**2)


def _votes(state: PartitionState, src, value, forge: Callable | None):
    """Copies of ``value`` sent by ``src``'s members, keyed by what they say."""
    adv = state.adversary
    c = state.clusters[src]
    honest = len(c.members) - c.malicious
    votes: Counter = Counter()
    if honest:
        votes[value] += honest
    if c.malicious:
        if adv.has(Behavior.EQUIVOCATE) and forge is not None:
            votes[forge(value)] += c.malicious
        elif not adv.has(Behavior.SILENT):
            votes[value] += c.malicious
    return votes


def _spread(state: PartitionState, start: Mapping, rounds: int, rng, *, merge=None, forge=None, units_per_copy=1) -> tuple[dict, float]:
    """Push gossip of per-cluster values; returns final values and message units.

    ``merge(old, new)`` folds an accepted value into the receiver's current
    one (default: keep a tally and hold the most common payload).
    """
    g = state.overlay.graph
    meter = state.meter
    adv = state.adversary
    held = dict(start)
    tally = {cid: Counter({v: 1}) for cid, v in held.items()}
    units = 0.0
    order = sorted(state.clusters)
    for _ in range(rounds):
        sends = []
        for cid in order:
            if cid not in held:
                continue
            nbs = g.neighbor_multiset(cid)
            if not nbs:
                continue
            dst = nbs[rand_num(state.clusters[cid], len(nbs), adv, rng, meter=meter)]
            sends.append((cid, dst, held[cid]))
        for src, dst, value in sends:
            c = state.clusters[src]
            d = state.clusters[dst]
            units += len(c.members) * len(d.members) * units_per_copy
            view = d.neighbor_view.get(src, frozenset(c.members))
            votes = _votes(state, src, value, forge)
            got = state.transport.accept(len(view), votes)
            if got is None:
                continue
            state.transport.check(len(view), votes[got])
            if merge is not None:
                held[dst] = got if dst not in held else merge(held[dst], got)
            else:
                t = tally.setdefault(dst, Counter())
                t[got] += 1
                held[dst] = t.most_common(1)[0][0]
    meter.messages += units
    return held, units


def broadcast_local(
    state: PartitionState,
    sender,
    payload: bytes,
    delta: float = 0.01,
    c: float = 4.0,
    adversary: Adversary | None = None,
    rng: np.random.Generator | None = None,
) -> BroadcastOutcome:
    """Gossip ``payload`` from ``sender``'s cluster to every cluster."""
    if sender not in state.node_index:
        raise ValueError(f"dead sender {sender!r}")
    home = state.node_index[sender]
    size = len(state.clusters[home].members)
    units = float(size * size)  # secure intra-cluster broadcast
    state.meter.messages += units
    if len(state.clusters) == 1:
        rounds = 1
        held = {home: payload}
    else:
        rounds = gossip_rounds(state.params.lam, delta, c)
        held, spent = _spread(state, {home: payload}, rounds, rng, forge=lambda v: BOGUS)
        units += spent
    delivered = {x: held.get(cid) for x, cid in state.node_index.items()}
    bits = int(units * len(payload) * 8)
    return BroadcastOutcome(delivered, False, rounds, units, bits)


def keyed_hash(data: bytes, bits: int) -> int:
    if not 1 <= bits <= 64:
        raise ValueError("hash width must be 1..64 bits")
    h = int.from_bytes(hashlib.blake2b(data, key=HASH_KEY, digest_size=8).digest(), "big")
    return h >> (64 - bits)


def broadcast_global(
    state: PartitionState,
    sender,
    payload: bytes,
    hash_bits: int = 32,
    delta: float = 0.01,
    adversary: Adversary | None = None,
    rng: np.random.Generator | None = None,
    *,
    c: float = 4.0,
    sender_payloads: Callable | None = None,
) -> BroadcastOutcome:
    """Direct send to all nodes, then a hash check gossiped from the sender's cluster.

    ``sender_payloads(node)`` lets a faulty sender hand different payloads
    to different nodes. Any cluster whose majority payload does not match the
    sender cluster's hash raises an alarm; nodes reached by an alarm abort.
    """
    if sender not in state.node_index:
        raise ValueError(f"dead sender {sender!r}")
    adv = state.adversary
    meter = state.meter
    got = {x: (sender_payloads(x) if sender_payloads else payload) for x in state.node_index}
    units = float(len(got))
    meter.messages += units
    majority = {}
    for cid, cl in state.clusters.items():
        reports = Counter()
        for x in cl.members:
            if adv.is_corrupted(x) and adv.has(Behavior.EQUIVOCATE):
                reports[BOGUS] += 1
            else:
                reports[got[x]] += 1
        value, count = reports.most_common(1)[0]
        majority[cid] = value if 2 * count > len(cl.members) else None
        units += len(cl.members) ** 2
    home = state.node_index[sender]
    b = rand_bits(state.clusters[home], hash_bits, adv, rng, meter=meter)
    b_bytes = b.to_bytes(8, "big")
    m_home = majority[home]
    tag = keyed_hash(b_bytes + (m_home or b""), hash_bits) if m_home is not None else None
    multi = len(state.clusters) > 1
    rounds = gossip_rounds(state.params.lam, delta, c) if multi else 1
    check = (b, tag)
    if multi:
        held, spent = _spread(state, {home: check}, rounds, rng, forge=lambda v: (v[0], None), units_per_copy=1)
        units += spent
    else:
        held = {home: check}
    alarms = []
    for cid in sorted(state.clusters):
        if cid not in held:
            continue
        hb, ht = held[cid]
        mc = majority[cid]
        if ht is None or mc is None or keyed_hash(hb.to_bytes(8, "big") + mc, hash_bits) != ht:
            alarms.append(cid)
    aborted_clusters = set()
    total_rounds = rounds
    if alarms:
        if multi:
            alarm_held, spent = _spread(state, {a: "alarm" for a in alarms}, rounds, rng)
            units += spent
            aborted_clusters = set(alarm_held)
            total_rounds += rounds
        else:
            aborted_clusters = set(alarms)
    delivered = {}
    for x, cid in state.node_index.items():
        if cid in aborted_clusters or cid not in held:
            delivered[x] = None
        else:
            delivered[x] = majority[cid]
    bits = int(len(got) * len(payload) * 8 + 2 * hash_bits * units)
    out = BroadcastOutcome(delivered, bool(aborted_clusters), total_rounds, units, bits, alarms)
    return out


def _cluster_tag(state: PartitionState, cid) -> tuple:
    return (min(state.clusters[cid].members), cid)


def _stub_agreement(state: PartitionState, cid, inputs: Mapping) -> int:
    """In-cluster agreement stand-in: majority of honest members' inputs."""
    cl = state.clusters[cid]
    honest = [inputs[x] for x in cl.members if not state.is_corrupted(x)]
    if 2 * len(honest) <= len(cl.members) or not honest:
        # malicious majority: the adversary picks, but only among real inputs
        return min(inputs[x] for x in cl.members)
    ones = sum(honest)
    if 2 * ones > len(honest):
        return 1
    if 2 * ones < len(honest):
        return 0
    return min(honest)


def agree(
    state: PartitionState,
    inputs: Mapping,
    initiator=None,
    adversary: Adversary | None = None,
    rng: np.random.Generator | None = None,
    *,
    delta: float = 0.01,
    c: float = 4.0,
) -> AgreeOutcome:
    """Binary agreement: one cluster decides, then broadcasts the decision.

    Without an explicit ``initiator`` every node starts the protocol with
    probability ``lam / n`` per silent window of ``lam**4`` rounds, doubling
    the probability after each silent window, ``lam`` doublings at most.
    Competing initiators are ordered by their cluster's lowest member id.
    """
    lam = state.params.lam
    window = lam**4
    windows = 0
    if initiator is None:
        nodes = sorted(state.node_index)
        p = lam / len(nodes)
        chosen = []
        for j in range(lam + 1):
            windows += 1
            hits = rng.random(len(nodes)) < min(1.0, p * 2**j)
            chosen = [nodes[i] for i in np.flatnonzero(hits)]
            if chosen:
                break
        if not chosen:
            raise RuntimeError("initiation failed")
        clusters = sorted({state.node_index[x] for x in chosen}, key=lambda cid: _cluster_tag(state, cid))
    else:
        if initiator not in state.clusters:
            raise ValueError(f"unknown cluster {initiator!r}")
        clusters = [initiator]
    winner = clusters[0]
    bit = _stub_agreement(state, winner, inputs)
    size = len(state.clusters[winner].members)
    state.meter.messages += size**2
    sender = min(x for x in state.clusters[winner].members)
    bc = broadcast_local(state, sender, bytes([bit]), delta, c, rng=rng)
    outputs = {x: (v[0] if v is not None else None) for x, v in bc.delivered.items()}
    honest_out = {v for x, v in outputs.items() if not state.is_corrupted(x)}
    decided = honest_out.pop() if len(honest_out) == 1 else None
    rounds = windows * window + bc.rounds
    return AgreeOutcome(decided, outputs, rounds, bc.messages + size**2, clusters, windows)


def aggregate_sum(
    state: PartitionState,
    inputs: Mapping,
    r: int,
    delta: float = 0.01,
    adversary: Adversary | None = None,
    rng: np.random.Generator | None = None,
    *,
    c: float = 4.0,
) -> AggregateOutcome:
    """Estimate the sum of positive integer inputs from exponential minima.

    Cluster ``C`` draws ``r`` exponentials of rate ``y_C`` (its members'
    total) by inverse CDF on shared 53-bit uniforms; the minima are spread by
    gossip and every node reports ``r / sum(minima)``.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    for x, v in inputs.items():
        if v <= 0 or int(v) != v:
            raise ValueError(f"input of {x!r} must be a positive integer")
    adv = state.adversary
    meter = state.meter
    start = {}
    units = 0.0
    for cid in sorted(state.clusters):
        cl = state.clusters[cid]
        y = sum(int(inputs[x]) for x in cl.members)
        units += len(cl.members) ** 2
        raw = rand_num(cl, 2**CLOCK_BITS, adv, rng, size=r, meter=meter)
        u = (raw.astype(np.float64) + 0.5) / 2.0**CLOCK_BITS
        start[cid] = _Frozen(-np.log(u) / y)
    meter.messages += units
    if len(state.clusters) > 1:
        rounds = gossip_rounds(state.params.lam, delta, c)
        held, spent = _spread(
            state, start, rounds, rng,
            merge=lambda a, b: _Frozen(np.minimum(a.arr, b.arr)),
            forge=lambda v: _Frozen(np.full_like(v.arr, 1e-300)),
            units_per_copy=r,
        )
        units += spent
    else:
        rounds, held = 1, start
    truth = np.minimum.reduce([v.arr for v in start.values()])
    ref = sorted(state.node_index)[0]
    w = held.get(state.node_index[ref], start[state.node_index[ref]]).arr
    converged = all(np.array_equal(held.get(cid, start[cid]).arr, truth) for cid in state.clusters)
    return AggregateOutcome(
        estimate=float(r / w.sum()),
        true_sum=float(sum(int(inputs[x]) for x in state.node_index)),
        r=r,
        w_mins=w,
        rounds=rounds,
        messages=units,
        converged=converged,
    )


class _Frozen:
    """Hashable wrapper so vectors can be tallied by the acceptance rule."""

    __slots__ = ("arr", "_key")

    def __init__(self, arr: np.ndarray):
        self.arr = arr
        self._key = arr.tobytes()

    def __hash__(self):
        return hash(self._key)

    def __eq__(self, other):
        return isinstance(other, _Frozen) and self._key == other._key


def sample(
    state: PartitionState,
    requester,
    count: int,
    adversary: Adversary | None = None,
    rng: np.random.Generator | None = None,
) -> list:
    """Peer sampling: walk to a random cluster, which names a random member.

    The answer travels back along the walk, so each sample costs twice the
    walk's hops in messages.
    """
    if requester not in state.node_index:
        raise ValueError(f"unknown requester {requester!r}")
    adv = state.adversary
    home = state.node_index[requester]
    walks = rand_cl(state, home, rng=rng, count=count)
    out = [None] * count
    groups: dict = {}
    for i, w in enumerate(walks):
        groups.setdefault(w.cluster, []).append((i, w.hijacked))
    for cid in sorted(groups):
        cl = state.clusters[cid]
        fair = []
        for i, hij in groups[cid]:
            if hij:
                pick = adv.hijack_sample(cl.members)
                if pick is not None:
                    out[i] = pick
                    continue
            fair.append(i)
        if fair:
            picks = rand_num(cl, len(cl.members), adv, rng, size=len(fair), meter=state.meter)
            for i, j in zip(fair, picks.tolist()):
                out[i] = cl.members[j]
    state.meter.messages += sum(w.hops for w in walks)  # the way back
    return out
