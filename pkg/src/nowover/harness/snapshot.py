"""Plain-text snapshot of a PartitionState.

Layout, one record per line::

    nowover-state 1
    params lam=2 k=2 l=1.5 tau=0.1 eps=0.1 exchange=1 walk_mode=auto bias=uniform ...
    step 120
    cluster 3 : 4 9 17 22 31 40 51 60
    corrupted 9 40
    view 3 7 : 1 5 12 ...         # cluster 3's roster record for neighbour 7
    overlay
    <edge list: vertex count, vertex ids, one "u v" line per edge copy>

Everything after ``overlay`` is the graph edge-list format. Node and
cluster ids are integers.
"""

from __future__ import annotations

from pathlib import Path

from .. import over
from ..adversary import Adversary, AdversaryPolicy, CorruptionLedger
from ..ctrw import Bias
from ..graph import dumps_edge_list, loads_edge_list
from ..now import NowParams, PartitionState, WalkMode

MAGIC = "nowover-state 1"


class SnapshotError(ValueError):
    pass


def dumps_state(state: PartitionState) -> str:
    p = state.params
    lines = [
        MAGIC,
        f"params lam={p.lam} k={p.k} l={p.l!r} tau={p.tau!r} eps={p.eps!r} "
        f"exchange={int(p.exchange)} walk_mode={p.walk_mode.value} bias={p.bias.value} "
        f"small_l={int(p.allow_small_l)} size_exponent={p.size_exponent}",
        f"step {state.step}",
    ]
    for cid in sorted(state.clusters):
        c = state.clusters[cid]
        lines.append(f"cluster {cid} : " + " ".join(str(x) for x in c.members))
    live_bad = sorted(x for x in state.node_index if state.is_corrupted(x))
    lines.append("corrupted " + " ".join(str(x) for x in live_bad))
    for cid in sorted(state.clusters):
        view = state.clusters[cid].neighbor_view
        for nb in sorted(view):
            lines.append(f"view {cid} {nb} : " + " ".join(str(x) for x in sorted(view[nb])))
    lines.append("overlay")
    return "\n".join(lines) + "\n" + dumps_edge_list(state.overlay.graph)


def loads_state(text: str) -> PartitionState:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise SnapshotError("not a state snapshot (bad header)")
    try:
        cut = lines.index("overlay")
    except ValueError:
        raise SnapshotError("missing overlay section") from None
    params = None
    step = 0
    rosters: list[tuple[int, list[int]]] = []
    corrupted: set = set()
    views: list[tuple[int, int, frozenset]] = []
    for no, raw in enumerate(lines[1:cut], start=2):
        line = raw.strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        try:
            if head == "params":
                kv = dict(tok.split("=", 1) for tok in rest.split())
                params = NowParams(
                    lam=int(kv["lam"]), k=int(kv["k"]), l=float(kv["l"]), tau=float(kv["tau"]),
                    eps=float(kv["eps"]), exchange=kv["exchange"] == "1",
                    walk_mode=WalkMode(kv["walk_mode"]), bias=Bias(kv["bias"]),
                    allow_small_l=kv.get("small_l", "0") == "1",
                    size_exponent=int(kv.get("size_exponent", 2)),
                )
            elif head == "step":
                step = int(rest)
            elif head == "cluster":
                left, _, right = rest.partition(":")
                rosters.append((int(left), [int(t) for t in right.split()]))
            elif head == "corrupted":
                corrupted = {int(t) for t in rest.split()}
            elif head == "view":
                left, _, right = rest.partition(":")
                a, b = left.split()
                views.append((int(a), int(b), frozenset(int(t) for t in right.split())))
            else:
                raise SnapshotError(f"line {no}: unknown record {head!r}")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, SnapshotError):
                raise
            raise SnapshotError(f"line {no}: {exc}") from None
    if params is None:
        raise SnapshotError("missing params record")
    graph = loads_edge_list("\n".join(lines[cut + 1:]))
    ledger = CorruptionLedger(corrupted=set(corrupted), budget_used=len(corrupted), limit=len(corrupted))
    adv = Adversary(AdversaryPolicy(tau=params.tau), ledger)
    state = PartitionState(params, over.OverlayState(graph, params.lam, keep_history=False), adv)
    state.step = step
    for cid, members in rosters:
        c = state._new_cluster(cid)
        # raw copy: a corrupt snapshot must stay corrupt for the sweeps to see it
        c.members = list(members)
        c.malicious = sum(1 for x in members if x in corrupted)
        for x in members:
            state.node_index.setdefault(x, cid)
    for cid, nb, roster in views:
        if cid in state.clusters:
            state.clusters[cid].neighbor_view[nb] = roster
    state._next_cluster = max(state.clusters, default=-1) + 1
    state._next_node = max(state.node_index, default=-1) + 1
    state._dirty.clear()
    return state


def write_state(state: PartitionState, path: str | Path) -> None:
    Path(path).write_text(dumps_state(state))


def read_state(path: str | Path) -> PartitionState:
    return loads_state(Path(path).read_text())
