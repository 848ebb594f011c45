"""Read-only invariant checks over a quiescent PartitionState."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..now import PartitionState

ALL_SWEEPS = ("partition", "size_band", "views", "overlay", "honest_majority")


@dataclass(frozen=True)
class Violation:
    sweep: str
    where: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.sweep}] {self.where}: {self.detail}"


@dataclass
class SweepReport:
    enabled: tuple
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, sweep: str) -> int:
        return sum(1 for v in self.violations if v.sweep == sweep)

    def passed(self) -> dict:
        return {s: self.count(s) == 0 for s in self.enabled}


def sweep_invariants(state: PartitionState, enabled=ALL_SWEEPS) -> SweepReport:
    enabled = tuple(enabled)
    report = SweepReport(enabled)
    out = report.violations
    if "partition" in enabled:
        out += _partition(state)
    if "size_band" in enabled:
        out += _size_band(state)
    if "views" in enabled:
        out += _views(state)
    if "overlay" in enabled:
        out += _overlay(state)
    if "honest_majority" in enabled:
        out += _honest_majority(state)
    return report


def _partition(state: PartitionState) -> list:
    seen = Counter()
    home = {}
    for cid, c in state.clusters.items():
        for x in c.members:
            seen[x] += 1
            home.setdefault(x, []).append(cid)
    out = []
    for x, k in seen.items():
        if k > 1:
            where = ", ".join(str(c) for c in home[x])
            out.append(Violation("partition", f"node {x}", f"listed {k} times (clusters {where})"))
        elif state.node_index.get(x) != home[x][0]:
            out.append(Violation("partition", f"node {x}", f"index says {state.node_index.get(x)}, roster says {home[x][0]}"))
    for x in state.node_index:
        if x not in seen:
            out.append(Violation("partition", f"node {x}", "indexed but in no roster"))
    return out


def _size_band(state: PartitionState) -> list:
    if len(state.clusters) <= 1:
        return []
    lo, hi = state.params.min_size, state.params.max_size
    return [
        Violation("size_band", f"cluster {cid}", f"size {len(c.members)} outside [{lo:g}, {hi:g}]")
        for cid, c in state.clusters.items()
        if not lo <= len(c.members) <= hi
    ]


def _views(state: PartitionState) -> list:
    out = []
    g = state.overlay.graph
    for cid, c in state.clusters.items():
        if cid not in g:
            continue
        nbs = set(g.neighbors(cid))
        keys = set(c.neighbor_view)
        for nb in sorted(nbs - keys, key=str):
            out.append(Violation("views", f"cluster {cid}", f"no roster for neighbour {nb}"))
        for nb in sorted(keys - nbs, key=str):
            out.append(Violation("views", f"cluster {cid}", f"stale roster for non-neighbour {nb}"))
        for nb in sorted(nbs & keys, key=str):
            d = state.clusters.get(nb)
            if d is not None and c.neighbor_view[nb] != frozenset(d.members):
                out.append(Violation("views", f"cluster {cid}", f"roster of {nb} out of date"))
    return out


def _overlay(state: PartitionState) -> list:
    g = state.overlay.graph
    verts, cids = set(g.vertices), set(state.clusters)
    out = [Violation("overlay", f"vertex {v}", "no matching cluster") for v in sorted(verts - cids, key=str)]
    out += [Violation("overlay", f"cluster {c}", "missing from overlay") for c in sorted(cids - verts, key=str)]
    if g.num_vertices and not g.is_connected():
        out.append(Violation("overlay", "graph", f"{len(g.components())} components"))
    return out


def _honest_majority(state: PartitionState) -> list:
    out = []
    for cid, c in state.clusters.items():
        bad = sum(1 for x in c.members if state.is_corrupted(x))
        if bad != c.malicious:
            out.append(Violation("honest_majority", f"cluster {cid}", f"counter {c.malicious} but census {bad}"))
        if 2 * bad >= len(c.members):
            out.append(Violation("honest_majority", f"cluster {cid}", f"{bad} of {len(c.members)} corrupted"))
    return out
