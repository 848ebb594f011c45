"""Metric records: JSON lines, a CSV summary, and the offline analysis tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from ..graph import laplacian_lambda2
from ..now import PartitionState

CSV_FIELDS = (
    "step", "n", "num_clusters", "min_size", "max_size", "mean_size",
    "max_malicious_fraction", "lambda2", "max_degree", "messages", "ops",
)


def _clean(v):
    if isinstance(v, float):
        return None if math.isnan(v) else round(v, 12)
    if isinstance(v, (np.floating,)):
        return _clean(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def dumps_record(rec: dict) -> str:
    return json.dumps(_clean(rec), sort_keys=True, separators=(",", ":"))


def digest(obj) -> str:
    return hashlib.blake2b(dumps_record(obj).encode(), digest_size=8).hexdigest()


def snapshot_record(state: PartitionState, *, with_lambda2: bool, messages: float, op_digests: list, kind: str = "metrics") -> dict:
    sizes = [len(c.members) for c in state.clusters.values()]
    fracs = [c.malicious / len(c.members) for c in state.clusters.values() if c.members]
    g = state.overlay.graph
    lam2 = None
    if with_lambda2 and g.num_vertices > 1:
        lam2 = laplacian_lambda2(g)
    return {
        "kind": kind,
        "step": state.step,
        "n": state.n,
        "num_clusters": len(sizes),
        "min_size": min(sizes, default=0),
        "max_size": max(sizes, default=0),
        "mean_size": float(np.mean(sizes)) if sizes else 0.0,
        "max_malicious_fraction": max(fracs, default=0.0),
        "lambda2": lam2,
        "max_degree": g.max_degree() if g.num_vertices else 0,
        "messages": messages,
        "ops": len(op_digests),
        "ops_digest": digest(op_digests),
    }


class MetricsStream:
    """Ordered records; serialization is canonical so equal runs give equal bytes."""

    def __init__(self):
        self.records: list[dict] = []

    def emit(self, rec: dict) -> None:
        self.records.append(rec)

    def dumps(self) -> str:
        return "".join(dumps_record(r) + "\n" for r in self.records)

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r.get("kind") == kind]

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    def csv_summary(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.records:
            if r.get("kind") in ("init", "metrics", "final"):
                w.writerow({k: ("" if r.get(k) is None else _clean(r.get(k))) for k in CSV_FIELDS})
        return buf.getvalue()


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def analyze(records: list[dict]) -> str:
    """Summary tables of a metrics stream, as printable text."""
    snaps = [r for r in records if r.get("kind") in ("init", "metrics", "final")]
    kinds: dict = {}
    for r in records:
        kinds[r.get("kind")] = kinds.get(r.get("kind"), 0) + 1
    lines = ["records by kind"]
    lines += [f"  {k:<12} {v:>8}" for k, v in sorted(kinds.items(), key=lambda kv: str(kv[0]))]
    if snaps:
        lam2 = [r["lambda2"] for r in snaps if r.get("lambda2") is not None]
        rows = [
            ("steps", snaps[-1]["step"]),
            ("n (min/max)", f"{min(r['n'] for r in snaps)} / {max(r['n'] for r in snaps)}"),
            ("clusters (min/max)", f"{min(r['num_clusters'] for r in snaps)} / {max(r['num_clusters'] for r in snaps)}"),
            ("cluster size range", f"{min(r['min_size'] for r in snaps)} .. {max(r['max_size'] for r in snaps)}"),
            ("peak malicious fraction", f"{max(r['max_malicious_fraction'] for r in snaps):.4f}"),
            ("min overlay lambda2", f"{min(lam2):.4f}" if lam2 else "n/a"),
            ("max overlay degree", max(r["max_degree"] for r in snaps)),
            ("message units", f"{sum(r['messages'] for r in snaps):.4g}"),
        ]
        lines.append("run")
        lines += [f"  {k:<24} {v}" for k, v in rows]
    outcomes = [r for r in records if r.get("kind") == "outcome"]
    if outcomes:
        lines.append("application calls")
        for r in outcomes:
            extra = " ".join(f"{k}={r[k]}" for k in sorted(r) if k not in ("kind", "step", "app"))
            lines.append(f"  step {r['step']:>6} {r['app']:<18} {extra}")
    final = [r for r in records if r.get("kind") == "sweep"]
    if final:
        lines.append("sweeps")
        for r in final:
            lines.append(f"  step {r['step']:>6} violations={r['violations']} {r.get('failed', [])}")
    return "\n".join(lines) + "\n"
