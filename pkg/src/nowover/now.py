"""Byzantine-resilient node clustering on top of the maintained overlay.

Nodes are partitioned into clusters of about ``k * lam**2`` members; each
cluster is one overlay vertex. Clusters act as trust units: a node accepts a
message from a cluster only when more than half of that cluster's members (as
the receiver knows them) sent it identically.

Maintenance keeps every cluster size in ``[k lam^2 / l, k l lam^2]``:

* join   the contact cluster walks to a random cluster C', which takes the
         newcomer, reshuffles all its members (``exchange``) and splits if
         it grew past the upper bound
* leave  the node's cluster reshuffles, every cluster that traded with it
         reshuffles too, and a cluster that fell below the lower bound is
         merged away
* merge  a randomly walked-to cluster C' is dissolved into C's slot: C's
         own members rejoin as newcomers and C' leaves the overlay

Walks use one of four engines (``PartitionState.walk_mode``):

``protocol``  every hop draws its neighbour and clock through ``rand_num``
``hop``       the compiled walk kernel, with hijacking clusters as stop set
``exact``     draw the endpoint from the walk's exact law
``auto``      ``exact`` while no cluster can hijack and nobody tampers with
              shared randomness, ``hop`` otherwise
"""

from __future__ import annotations

import enum
import hashlib
import math
import os
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from . import over
from .adversary import Adversary, AdversaryPolicy, AssumptionViolated, Behavior, Commitment, CorruptionLedger
from .ctrw import Bias, ExactEndpointSampler, overlay_budget, walk_endpoints
from .graph import Graph, GraphError, PackedAdjacency

CLOCK_BITS = 53
MAX_SPLIT_DRAWS = 10_000
MAX_PICK_RETRIES = 64


class ProtocolError(RuntimeError):
    pass


class WalkMode(enum.Enum):
    PROTOCOL = "protocol"
    HOP = "hop"
    EXACT = "exact"
    AUTO = "auto"


@dataclass(frozen=True)
class NowParams:
    lam: int
    k: int = 2
    l: float = 1.5
    tau: float = 0.0
    eps: float = 0.1
    size_exponent: int = 2
    exchange: bool = True
    walk_mode: WalkMode = WalkMode.AUTO
    bias: Bias = Bias.UNIFORM
    allow_small_l: bool = False

    def __post_init__(self):
        if self.lam < 1 or self.k < 1:
            raise ValueError("lam and k must be positive")
        if self.l <= math.sqrt(2) and not self.allow_small_l:
            raise ValueError("l must exceed sqrt(2)")
        if not isinstance(self.walk_mode, WalkMode):
            object.__setattr__(self, "walk_mode", WalkMode(self.walk_mode))

    @property
    def base_size(self) -> int:
        return self.k * self.lam**self.size_exponent

    @property
    def min_size(self) -> float:
        return self.base_size / self.l

    @property
    def max_size(self) -> float:
        return self.base_size * self.l

    def replace(self, **kw) -> "NowParams":
        return replace(self, **kw)


class Cluster:
    __slots__ = ("cid", "members", "malicious", "neighbor_view")

    def __init__(self, cid: Hashable):
        self.cid = cid
        self.members: list = []
        self.malicious = 0
        self.neighbor_view: dict = {}

    def __len__(self) -> int:
        return len(self.members)

    def __repr__(self) -> str:
        return f"Cluster({self.cid!r}, size={len(self.members)})"


@dataclass
class Meter:
    """Running cost counters (message units and walk hops)."""

    messages: float = 0.0
    hops: float = 0.0
    rand_num_calls: int = 0
    walks: int = 0
    hijacked_walks: int = 0
    exchanges: int = 0
    splits: int = 0
    merges: int = 0
    announcements: int = 0

    def snapshot(self) -> dict:
        return dict(self.__dict__)


class Transport:
    """Half-plus-one acceptance of cluster messages, with identity checks."""

    def __init__(self):
        self.accepted = 0
        self.rejected = 0
        self.forged = 0
        self.unsound = 0

    def deliver(self, view: Iterable, copies: Iterable[tuple]):
        """``copies`` holds ``(claimed_sender, actual_sender, payload)`` triples.

        Returns the accepted payload or None.
        """
        view = set(view)
        votes: dict = {}
        voted: set = set()
        for claimed, actual, payload in copies:
            if claimed != actual:
                self.forged += 1
                continue
            if claimed not in view or claimed in voted:
                continue
            voted.add(claimed)
            votes[payload] = votes.get(payload, 0) + 1
        return self.accept(len(view), votes)

    def accept(self, view_size: int, votes: Mapping):
        best, count = None, 0
        for payload, c in votes.items():
            if c > count:
                best, count = payload, c
        if 2 * count > view_size:
            self.accepted += 1
            return best
        self.rejected += 1
        return None

    def check(self, view_size: int, support: int) -> None:
        if 2 * support <= view_size:
            self.unsound += 1


# -- shared randomness ---------------------------------------------------------------


def _members_of(c) -> list:
    return c.members if isinstance(c, Cluster) else list(c)


def rand_num(c, r: int, adversary: Adversary | None, rng: np.random.Generator, *, size: int | None = None, meter: Meter | None = None):
    """Commit-reveal draw of a shared integer in ``[0, r)``.

    Every member commits a uniform value (corrupted members commit whatever
    the adversary picks without seeing honest values); honest members then
    reveal, corrupted members reveal or withhold as the adversary decides,
    and the result is the sum of the revealed values modulo ``r``. With
    ``size`` every member commits a vector and a vector comes back.
    """
    members = _members_of(c)
    if r < 1:
        raise ValueError("r must be at least 1")
    if not members:
        raise ValueError("empty cluster")
    if meter is not None:
        meter.rand_num_calls += 1
        meter.messages += 2 * len(members) ** 2
    shape = (size,) if size is not None else ()
    if r == 1:
        return np.zeros(shape, np.int64) if size is not None else 0
    if r >= 2**62:
        return _rand_num_bigint(members, r, adversary, rng, size)
    m = len(members)
    values = rng.integers(0, r, size=(m,) + shape, dtype=np.int64)
    if adversary is not None and adversary.interferes_with_randomness:
        bad = [i for i, x in enumerate(members) if adversary.is_corrupted(x)]
        if bad:
            return _tampered(values, bad, r, adversary, rng, size)
    return _modsum(values, r, size)


def _modsum(values: np.ndarray, r: int, size):
    if values.shape[0] * (r - 1) < 2**63:
        out = values.sum(axis=0) % r
    else:
        out = np.zeros(values.shape[1:], np.int64)
        for row in values:
            out = (out + row) % r
    return out.astype(np.int64) if size is not None else int(out)


def _tampered(values, bad, r, adversary, rng, size):
    good = [i for i in range(values.shape[0]) if i not in set(bad)]
    commits = [Commitment(values[i], rng.bytes(16)) for i in good]
    forced = adversary.commit_values(r, (len(bad),) + values.shape[1:], commits)
    if forced is not None:
        values[bad] = forced
    honest_total = _modsum(values[good], r, size) if good else (np.zeros(values.shape[1:], np.int64) if size is not None else 0)
    keep = adversary.choose_reveals(honest_total, [values[i] for i in bad], r)
    rows = good + [i for i, k in zip(bad, keep) if k]
    if not rows:
        return np.zeros(values.shape[1:], np.int64) if size is not None else 0
    return _modsum(values[rows], r, size)


def _rand_num_bigint(members, r, adversary, rng, size):
    chunks = math.ceil(r.bit_length() / 32) + 2

    def draw():
        x = 0
        for w in rng.integers(0, 2**32, size=chunks, dtype=np.uint64).tolist():
            x = (x << 32) | w
        return x % r

    count = size if size is not None else 1
    out = []
    for _ in range(count):
        total, withheld = 0, []
        for x in members:
            v = draw()
            if adversary is not None and adversary.is_corrupted(x) and adversary.has(Behavior.WITHHOLD_REVEAL):
                withheld.append(v)
            else:
                total += v
        if withheld:
            keep = adversary.choose_reveals(total, withheld, r)
            total += sum(v for v, k in zip(withheld, keep) if k)
        out.append(total % r)
    return out if size is not None else out[0]


def rand_bits(c, bits: int, adversary, rng, *, meter=None) -> int:
    """Shared ``bits``-bit string, as an integer."""
    return int(rand_num(c, 2**bits, adversary, rng, meter=meter))


# -- state ------------------------------------------------------------------------


@dataclass
class WalkResult:
    cluster: Hashable
    hops: float
    hijacked: bool
    path: tuple = ()


class PartitionState:
    def __init__(self, params: NowParams, overlay: over.OverlayState, adversary: Adversary | None = None):
        self.params = params
        self.overlay = overlay
        self.adversary = adversary or Adversary()
        self.clusters: dict = {}
        self.node_index: dict = {}
        self.step = 0
        self.meter = Meter()
        self.transport = Transport()
        self.events: list = []
        self._next_node = 0
        self._next_cluster = 0
        self._dirty: set = set()
        self._exact_cache = None
        self._packed_cache = None

    # -- identity allocation --------------------------------------------------------
    def new_node_id(self) -> int:
        nid = self._next_node
        self._next_node += 1
        return nid

    def new_cluster_id(self) -> int:
        cid = self._next_cluster
        self._next_cluster += 1
        return cid

    # -- convenience ----------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.node_index)

    @property
    def walk_time(self) -> float:
        return overlay_budget(self.params.lam)

    def is_corrupted(self, node) -> bool:
        return self.adversary.is_corrupted(node)

    def cluster_of(self, node) -> Cluster:
        return self.clusters[self.node_index[node]]

    def sizes(self) -> dict:
        return {cid: len(c.members) for cid, c in self.clusters.items()}

    def hijackers(self) -> list:
        if not self.adversary.hijacks:
            return []
        return [cid for cid, c in self.clusters.items() if 2 * c.malicious > len(c.members)]

    def malicious_majority(self) -> list:
        return [cid for cid, c in self.clusters.items() if 2 * c.malicious > len(c.members)]

    # -- membership primitives (no protocol logic) ------------------------------------
    def _insert(self, node, cid) -> None:
        c = self.clusters[cid]
        c.members.append(node)
        if self.adversary.is_corrupted(node):
            c.malicious += 1
        self.node_index[node] = cid
        self._dirty.add(cid)

    def _remove(self, node) -> Hashable:
        cid = self.node_index.pop(node)
        c = self.clusters[cid]
        c.members.remove(node)
        if self.adversary.is_corrupted(node):
            c.malicious -= 1
        self._dirty.add(cid)
        return cid

    def _new_cluster(self, cid=None) -> Cluster:
        cid = self.new_cluster_id() if cid is None else cid
        c = Cluster(cid)
        self.clusters[cid] = c
        return c

    # -- walk engines -----------------------------------------------------------------
    def _packed(self) -> PackedAdjacency:
        g = self.overlay.graph
        if self._packed_cache is None or self._packed_cache.source_version != g.version:
            self._packed_cache = g.packed()
        return self._packed_cache

    def _exact(self) -> ExactEndpointSampler:
        g = self.overlay.graph
        if self._exact_cache is None or self._exact_cache.source_version != g.version:
            self._exact_cache = ExactEndpointSampler(g, self.walk_time)
        return self._exact_cache

    def effective_walk_mode(self) -> WalkMode:
        mode = self.params.walk_mode
        if mode is not WalkMode.AUTO:
            return mode
        if self.params.bias is not Bias.UNIFORM:
            return WalkMode.HOP
        if self.adversary.interferes_with_randomness or self.hijackers():
            return WalkMode.HOP
        return WalkMode.EXACT

    def _weights(self, packed: PackedAdjacency) -> np.ndarray | None:
        if self.params.bias is Bias.UNIFORM:
            return None
        w = np.ones(packed.deg.shape[0])
        for v, i in packed.index.items():
            w[i] = len(self.clusters[v].members) / self.params.lam**2
        return w

    def overlay_walk(self, packed: PackedAdjacency, start_row: int, count: int, rng) -> tuple:
        """Walk function for overlay Add/Remove run by clusters.

        Hijacking is not modelled here: only walks that place nodes matter
        to the adversary, and a hijacker returning itself for both ends of
        a repair pair would stall the repair forever.
        """
        ends, hops = walk_endpoints(packed, np.full(count, start_row), self.walk_time, rng, weights=self._weights(packed))
        self.meter.walks += count
        self.meter.hops += float(hops.sum())
        self.meter.messages += 2 * float(hops.sum())
        return ends, int(hops.sum())

    def flush(self) -> None:
        """Announce every changed roster to the neighbouring clusters."""
        if not self._dirty:
            return
        g = self.overlay.graph
        for cid in sorted(self._dirty, key=_sort_key):
            c = self.clusters.get(cid)
            if c is None:
                continue
            self._announce(c, g)
        self._dirty.clear()

    def _announce(self, c: Cluster, g: Graph) -> None:
        self.meter.announcements += 1
        roster = frozenset(c.members)
        equivocate = self.adversary.has(Behavior.EQUIVOCATE) and c.malicious > 0
        outcomes: dict = {}
        for nb in g.neighbors(c.cid):
            d = self.clusters[nb]
            old = d.neighbor_view.get(c.cid)
            key = id(old)
            if key not in outcomes:
                view = old if old is not None else roster
                # the members d knows vouch for the new roster, wherever they sit now;
                # nodes that left or crashed cannot
                alive = [x for x in view if x in self.node_index]
                support_h = sum(1 for x in alive if not self.adversary.is_corrupted(x))
                support_m = len(alive) - support_h
                votes = {roster: support_h} if equivocate else {roster: support_h + support_m}
                if equivocate:
                    votes[frozenset(x for x in c.members if self.adversary.is_corrupted(x))] = support_m
                got = self.transport.accept(len(view), votes)
                if got is None and old is None:
                    got = roster
                if got is not None:
                    self.transport.check(len(view), votes[got])
                outcomes[key] = got
            got = outcomes[key]
            if got is not None:
                d.neighbor_view[c.cid] = got
            self.meter.messages += len(c.members) * len(d.members)

    def refresh_views(self, cids: Iterable) -> None:
        """Rebuild neighbour-view keys of ``cids`` after overlay changes."""
        g = self.overlay.graph
        for cid in cids:
            c = self.clusters.get(cid)
            if c is None:
                continue
            nbs = set(g.neighbors(cid))
            for gone in [k for k in c.neighbor_view if k not in nbs]:
                del c.neighbor_view[gone]
            for nb in nbs:
                if nb not in c.neighbor_view:
                    c.neighbor_view[nb] = frozenset(self.clusters[nb].members)

    def copy(self) -> "PartitionState":
        import copy

        return copy.deepcopy(self)


def _sort_key(x):
    return (str(type(x)), x)


# -- walks --------------------------------------------------------------------------


def rand_cl(state: PartitionState, start: Hashable, adversary: Adversary | None = None, rng: np.random.Generator | None = None, *, count: int | None = None):
    """Cluster-level random walk from ``start``; returns where it ended.

    With ``count`` a list of independent results comes back.
    """
    if rng is None:
        raise ValueError("rand_cl needs a random stream")
    if adversary is not None and adversary is not state.adversary:
        raise ValueError("rand_cl must use the state's adversary")
    if start not in state.clusters:
        raise GraphError(f"unknown cluster {start!r}")
    k = 1 if count is None else count
    g = state.overlay.graph
    meter = state.meter
    if g.degree(start) == 0 or k == 0:
        # nowhere to go: a lone (or cut-off) cluster only reaches itself
        out = [WalkResult(start, 0, False) for _ in range(k)]
        return out[0] if count is None else out
    mode = state.effective_walk_mode()
    if mode is WalkMode.EXACT:
        ex = state._exact()
        rows = ex.sample_rows(ex.index[start], k, rng)
        meter.walks += k
        meter.hops += ex.expected_hops * k
        meter.messages += 2 * ex.expected_hops * k
        out = [WalkResult(ex.vertices[i], ex.expected_hops, False) for i in rows.tolist()]
    elif mode is WalkMode.HOP:
        packed = state._packed()
        stop = np.zeros(packed.deg.shape[0], np.bool_)
        for cid in state.hijackers():
            stop[packed.index[cid]] = True
        ends, hops = walk_endpoints(packed, np.full(k, packed.index[start]), state.walk_time, rng, stop=stop, weights=state._weights(packed))
        meter.walks += k
        meter.hops += float(hops.sum())
        meter.messages += 2 * float(hops.sum())
        out = [WalkResult(packed.vertices[e], h, bool(stop[e])) for e, h in zip(ends.tolist(), hops.tolist())]
    else:
        out = [_protocol_walk(state, start, rng) for _ in range(k)]
    hij = sum(r.hijacked for r in out)
    if hij:
        meter.hijacked_walks += hij
        state.adversary.hijacked_walks += hij
    return out[0] if count is None else out


def _protocol_walk(state: PartitionState, start, rng) -> WalkResult:
    """Hop-by-hop walk where every random choice comes from ``rand_num``."""
    g = state.overlay.graph
    adv = state.adversary
    meter = state.meter
    lam2 = state.params.lam**2
    hijack = set(state.hijackers())
    cur = start
    path = [start]
    t = state.walk_time

    def step_from(c):
        nbs = g.neighbor_multiset(c)
        i = rand_num(state.clusters[c], len(nbs), adv, rng, meter=meter)
        nxt = nbs[i]
        # the receiving cluster only takes the token on a majority of identical copies
        sender = state.clusters[c]
        view = state.clusters[nxt].neighbor_view.get(c, frozenset(sender.members))
        support = sum(1 for x in sender.members if x in view and adv.forwards(x))
        if state.transport.accept(len(view), {nxt: support}) is None:
            return None
        meter.messages += len(sender.members) * len(state.clusters[nxt].members)
        return nxt

    nxt = step_from(cur)
    if nxt is None:
        return WalkResult(cur, len(path) - 1, False, tuple(path))
    cur = nxt
    path.append(cur)
    while True:
        if cur in hijack:
            return WalkResult(cur, len(path) - 1, True, tuple(path))
        c = state.clusters[cur]
        x = rand_num(c, 2**CLOCK_BITS, adv, rng, meter=meter)
        u = 1.0 - x / 2.0**CLOCK_BITS
        scale = len(c.members) / lam2 if state.params.bias is Bias.CLUSTER_SIZE_WEIGHTED else 1.0
        t -= -math.log(u) * scale / g.degree(cur)
        if t <= 0:
            break
        nxt = step_from(cur)
        if nxt is None:
            break
        cur = nxt
        path.append(cur)
    meter.hops += len(path) - 1
    return WalkResult(cur, len(path) - 1, False, tuple(path))


# -- maintenance primitives ------------------------------------------------------------


def exchange(state: PartitionState, c: Hashable, adversary: Adversary | None = None, rng: np.random.Generator | None = None) -> set:
    """Swap every member of ``c`` with a random node of a random cluster.

    Targets are picked member by member, then all swaps are applied at once.
    Returns the set of clusters that traded with ``c``.
    """
    if c not in state.clusters:
        raise GraphError(f"unknown cluster {c!r}")
    adv = state.adversary
    meter = state.meter
    meter.exchanges += 1
    home = state.clusters[c]
    members = list(home.members)
    if not members:
        return set()
    walks = rand_cl(state, c, rng=rng, count=len(members))
    by_target: dict = {}
    for x, w in zip(members, walks):
        if w.cluster != c:
            by_target.setdefault(w.cluster, []).append((x, w.hijacked))
    taken: set = set()
    swaps = []
    for target in sorted(by_target, key=_sort_key):
        d = state.clusters[target]
        entries = by_target[target]
        fair = [x for x, hij in entries if not hij]
        rigged = [x for x, hij in entries if hij]
        d_mal = d.malicious
        for x in rigged:
            y = adv.hijack_replacement(d.members, taken, d_mal)
            if y is None:
                fair.append(x)
                continue
            taken.add(y)
            d_mal += adv.is_corrupted(x) - adv.is_corrupted(y)
            swaps.append((x, y, target))
        if not fair:
            continue
        picks = rand_num(d, len(d.members), adv, rng, size=len(fair), meter=meter).tolist()
        for x, i in zip(fair, picks):
            y = d.members[i]
            tries = 0
            while y in taken and tries < MAX_PICK_RETRIES:
                y = d.members[rand_num(d, len(d.members), adv, rng, meter=meter)]
                tries += 1
            if y in taken:
                continue  # every member of d already promised elsewhere
            taken.add(y)
            swaps.append((x, y, target))
    for x, y, target in swaps:
        state._remove(x)
        state._remove(y)
        state._insert(x, target)
        state._insert(y, c)
    return {t for _, _, t in swaps}


def _split(state: PartitionState, cid, rng) -> Hashable:
    adv = state.adversary
    c = state.clusters[cid]
    members = list(c.members)
    n = len(members)
    for _ in range(MAX_SPLIT_DRAWS):
        coins = rand_num(c, 2, adv, rng, size=n, meter=state.meter)
        ones = int(coins.sum())
        if abs(n - 2 * ones) <= 1:
            break
    else:
        raise ProtocolError("split coin flips never balanced")
    new = state._new_cluster()
    for x, b in zip(members, coins.tolist()):
        if b:
            state._remove(x)
            state._insert(x, new.cid)
    ev = over.add_vertex(state.overlay, cid, new.cid, rng, walk=state.overlay_walk)
    touched = {new.cid, cid} | {v for e in ev.edges_touched for v in e}
    state.refresh_views(touched)
    state._dirty |= touched
    state.meter.splits += 1
    state.events.append(("split", state.step, cid, new.cid))
    return new.cid


def _remove_cluster_vertex(state: PartitionState, cid, rng) -> None:
    g = state.overlay.graph
    nbs = set(g.neighbors(cid))
    ev = over.remove_vertex(state.overlay, cid, rng, walk=state.overlay_walk)
    touched = nbs | {v for e in ev.edges_touched for v in e}
    del state.clusters[cid]
    state.refresh_views(touched)
    state._dirty |= touched


def _merge(state: PartitionState, cid, rng) -> None:
    adv = state.adversary
    w = rand_cl(state, cid, rng=rng)
    other = w.cluster
    leavers = list(state.clusters[cid].members)
    for x in leavers:
        state._remove(x)
    if other == cid:
        _remove_cluster_vertex(state, cid, rng)
        survivor = None
    else:
        for y in list(state.clusters[other].members):
            state._remove(y)
            state._insert(y, cid)
        _remove_cluster_vertex(state, other, rng)
        survivor = cid
    state.meter.merges += 1
    state.events.append(("merge", state.step, cid, other))
    for x in leavers:
        contact = survivor if survivor is not None else _any_cluster(state, rng)
        join(state, x, contact, rng, _flush=False)


def _any_cluster(state, rng):
    cids = sorted(state.clusters, key=_sort_key)
    return cids[int(rng.integers(len(cids)))]


# -- operations ---------------------------------------------------------------------


def join(state: PartitionState, new_node, contact, rng: np.random.Generator, adversary: Adversary | None = None, *, _flush: bool = True) -> Hashable:
    """Insert ``new_node`` into a random cluster; returns that cluster's id."""
    if new_node in state.node_index:
        raise ValueError(f"node {new_node!r} already present")
    if contact not in state.clusters:
        raise GraphError(f"unknown contact cluster {contact!r}")
    if isinstance(new_node, int) and new_node >= state._next_node:
        state._next_node = new_node + 1
    w = rand_cl(state, contact, rng=rng)
    target = w.cluster
    state._insert(new_node, target)
    if state.params.exchange:
        exchange(state, target, rng=rng)
    if len(state.clusters[target].members) > state.params.max_size:
        _split(state, target, rng)
    if _flush:
        state.flush()
    return target


def leave(state: PartitionState, node, rng: np.random.Generator, adversary: Adversary | None = None, *, _flush: bool = True) -> None:
    """Remove ``node`` (graceful leave or detected crash) and repair."""
    if node not in state.node_index:
        raise ValueError(f"unknown node {node!r}")
    cid = state._remove(node)
    state.adversary.ledger.depart(node)
    if state.params.exchange:
        partners = exchange(state, cid, rng=rng)
        for d in sorted(partners, key=_sort_key):
            if d in state.clusters:
                exchange(state, d, rng=rng)
    if (
        cid in state.clusters
        and len(state.clusters[cid].members) < state.params.min_size
        and len(state.clusters) > 1
    ):
        _merge(state, cid, rng)
    if _flush:
        state.flush()


def crash_nodes(state: PartitionState, victims: Sequence, rng: np.random.Generator):
    """Simultaneous crash of ``victims``; see ``adversary.crash_attack``."""
    from .adversary import CrashReport

    before = {cid: (len(c.members), 2 * c.malicious > len(c.members)) for cid, c in state.clusters.items()}
    lost: dict = {}
    for x in victims:
        cid = state._remove(x)
        state.adversary.ledger.depart(x)
        lost[cid] = lost.get(cid, 0) + 1
    dead = [cid for cid, k in lost.items() if 2 * (before[cid][0] - k) <= before[cid][0]]
    alive_hit = [cid for cid in lost if cid not in dead]
    flipped = [
        cid for cid in alive_hit
        if not before[cid][1] and 2 * state.clusters[cid].malicious > len(state.clusters[cid].members)
    ]
    orphans = []
    for cid in sorted(dead, key=_sort_key):
        if len(state.clusters) == 1:
            break
        for x in list(state.clusters[cid].members):
            state._remove(x)
            orphans.append(x)
        nbs = set(state.overlay.graph.neighbors(cid))
        over.crash_vertex(state.overlay, cid)
        del state.clusters[cid]
        state.refresh_views(nbs)
        state.events.append(("dead", state.step, cid))
    if state.params.exchange:
        for cid in sorted(alive_hit, key=_sort_key):
            if cid not in state.clusters:
                continue
            partners = exchange(state, cid, rng=rng)
            for d in sorted(partners, key=_sort_key):
                if d in state.clusters:
                    exchange(state, d, rng=rng)
    for cid in sorted(alive_hit, key=_sort_key):
        if cid in state.clusters and len(state.clusters[cid].members) < state.params.min_size and len(state.clusters) > 1:
            _merge(state, cid, rng)
    for x in orphans:
        join(state, x, _any_cluster(state, rng), rng, _flush=False)
    state.flush()
    after_flip = [
        cid for cid in alive_hit
        if cid in state.clusters and not before[cid][1]
        and 2 * state.clusters[cid].malicious > len(state.clusters[cid].members)
    ]
    return CrashReport(list(victims), dead, sorted(set(flipped) | set(after_flip), key=_sort_key), len(alive_hit))


# -- initialization -------------------------------------------------------------------


def global_knowledge(
    g: Graph,
    honesty: Mapping,
    adversary: Adversary | None = None,
    rng: np.random.Generator | None = None,
    *,
    demo: bool = False,
) -> tuple[dict, int]:
    """Spread node identities over the node graph by pairwise list exchange.

    Each node keeps a request list. A node with an empty list queues a random
    known node it has not written to yet; a node sends its known-id list to the
    head of its request list; a receiver merges the list and queues the
    sender. Every ordered pair communicates at most once, so the number of
    messages (``steps``) is at most ``n (n - 1)``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    nodes = g.vertices
    honest = [v for v in nodes if honesty.get(v, True)]
    if honest and not _connected_within(g, set(honest)) and not demo:
        raise AssumptionViolated("assumption violated: honest nodes are disconnected")
    silent = adversary is not None and adversary.has(Behavior.SILENT)
    known = {v: set(g.neighbors(v)) | {v} for v in nodes}
    sent = {v: set() for v in nodes}
    queue = {v: deque() for v in nodes}
    queued = {v: set() for v in nodes}
    steps = 0
    order = list(nodes)
    while True:
        progressed = False
        for x in order:
            mute = silent and not honesty.get(x, True)
            if not queue[x]:
                fresh = sorted((known[x] - sent[x] - {x}), key=_sort_key)
                if fresh:
                    y = fresh[int(rng.integers(len(fresh)))]
                    queue[x].append(y)
                    queued[x].add(y)
            while queue[x]:
                y = queue[x].popleft()
                queued[x].discard(y)
                if y in sent[x]:
                    continue
                sent[x].add(y)
                progressed = True
                if mute:
                    break
                steps += 1
                known[y] |= known[x]
                if x not in sent[y] and x not in queued[y]:
                    queue[y].append(x)
                    queued[y].add(x)
                break
        if not progressed:
            break
    return known, steps


def _connected_within(g: Graph, keep: set) -> bool:
    start = next(iter(keep))
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for y in g.neighbors(x):
            if y in keep and y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(keep)


def clusterize(
    ids: Iterable,
    params: NowParams,
    rng: np.random.Generator,
    adversary: Adversary | None = None,
    *,
    keep_history: bool = False,
) -> PartitionState:
    """Random partition into clusters of ``k lam^2`` plus a seeded overlay.

    Leftover nodes are dealt one per cluster, round-robin.
    """
    ids = list(ids)
    base = params.base_size
    if len(ids) < 2 * base:
        raise ValueError(f"need at least {2 * base} nodes, got {len(ids)}")
    m = len(ids) // base
    perm = [ids[i] for i in rng.permutation(len(ids))]
    overlay = over.seed_overlay(m, params.lam, rng, keep_history=keep_history)
    state = PartitionState(params, overlay, adversary)
    for cid in range(m):
        state._new_cluster(cid)
    state._next_cluster = m
    for i, x in enumerate(perm):
        cid = i % m if i >= m * base else i // base
        state._insert(x, cid)
    state._next_node = max([x + 1 for x in ids if isinstance(x, int)], default=0)
    state.refresh_views(state.clusters)
    state._dirty.clear()
    # representative committee agreement, charged as n^1.5 message units
    state.meter.messages += len(ids) ** 1.5
    return state


def bootstrap(
    n: int,
    params: NowParams,
    rng: np.random.Generator,
    adversary: Adversary | None = None,
    *,
    node_graph_p: float | None = None,
    demo: bool = False,
) -> tuple[PartitionState, dict]:
    """Node graph, identity spreading and clusterization from scratch."""
    from .graph import erdos_renyi

    adversary = adversary or Adversary()
    p = node_graph_p if node_graph_p is not None else min(1.0, 2 * math.log(max(n, 2)) / max(n, 2))
    g = erdos_renyi(n, p, rng)
    honesty = {v: not adversary.is_corrupted(v) for v in g.vertices}
    views, steps = global_knowledge(g, honesty, adversary, rng, demo=demo)
    state = clusterize(range(n), params, rng, adversary)
    state.meter.messages += steps
    return state, {"gk_steps": steps, "node_graph_edges": g.num_edges}
