"""Deterministic event loop: init phase, churn replay, metrics and sweeps.

Random streams are split per purpose and per step from the root seed, as
``default_rng([seed, stream, step])``. The adversary has a stream of its
own, so its choices never shift the draws honest nodes make.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import apps, now
from ..adversary import (
    Adversary,
    AdversaryPolicy,
    AssumptionViolated,
    Behavior,
    JoinRule,
    corrupt_initial,
    crash_attack,
    decide_on_join,
    honest_connected,
)
from ..ctrw import Bias
from ..graph import erdos_renyi, write_edge_list
from .config import ScenarioConfig, ScheduledOp
from .metrics import MetricsStream, digest, snapshot_record
from .snapshot import write_state
from .sweeps import sweep_invariants

STREAMS = {"graph": 1, "adversary": 2, "churn": 3, "protocol": 4, "app": 5, "attack": 6, "init": 7}
GRAPH_TRIES = 100


def stream(seed: int, name: str, step: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[name], step])


@dataclass
class RunResult:
    state: now.PartitionState
    metrics: MetricsStream
    summary: dict
    sweep_failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.summary["passed"]


def make_params(cfg: ScenarioConfig) -> now.NowParams:
    return now.NowParams(
        lam=cfg.lam, k=cfg.k, l=cfg.l, tau=cfg.tau, eps=cfg.epsilon,
        size_exponent=cfg.size_exponent, exchange=cfg.exchange, walk_mode=now.WalkMode(cfg.walk_mode),
        bias=Bias(cfg.bias), allow_small_l=cfg.small_l,
    )


def make_policy(cfg: ScenarioConfig, extra: Behavior = Behavior.NONE) -> AdversaryPolicy:
    return AdversaryPolicy(
        tau=cfg.tau,
        corrupt_on_join=JoinRule(cfg.join_rule),
        behavior=Behavior.parse(cfg.behavior) | extra,
        target=cfg.target,
        crash_epsilon=cfg.epsilon,
        initial_selection=cfg.selection,
    )


def initialize(cfg: ScenarioConfig, extra: Behavior = Behavior.NONE) -> tuple[now.PartitionState, dict]:
    """Node graph, initial corruption, identity spreading and clusterization."""
    n = cfg.n_initial
    p = cfg.node_graph_p if cfg.node_graph_p is not None else min(1.0, 2 * math.log(n) / n)
    policy = make_policy(cfg, extra)
    grng = stream(cfg.seed, "graph")
    arng = stream(cfg.seed, "adversary")
    for tries in range(1, GRAPH_TRIES + 1):
        g = erdos_renyi(n, p, grng, connected=False)
        ledger = corrupt_initial(range(n), policy, arng, n_max=cfg.n_max, graph=g, demo=True)
        if honest_connected(g, ledger.corrupted):
            break
        if cfg.demo:
            break
    else:
        raise AssumptionViolated(
            f"assumption violated: honest nodes disconnected in all {GRAPH_TRIES} node graphs "
            f"(selection={cfg.selection}, tau={cfg.tau})"
        )
    adversary = Adversary(policy, ledger, arng)
    irng = stream(cfg.seed, "init")
    honesty = {v: v not in ledger.corrupted for v in g.vertices}
    views, gk_steps = now.global_knowledge(g, honesty, adversary, irng, demo=cfg.demo)
    honest = [v for v in g.vertices if honesty[v]]
    complete = all(views[v] >= set(honest) for v in honest)
    committee = _committee(range(n), cfg.lam**2, adversary, irng)
    state = now.clusterize(range(n), make_params(cfg), irng, adversary)
    state.meter.messages += gk_steps
    info = {
        "gk_steps": gk_steps,
        "gk_complete": complete,
        "graph_tries": tries,
        "node_graph_edges": g.num_edges,
        "committee": committee,
        "corrupted_initial": len(ledger.corrupted),
    }
    return state, info


def _committee(ids, size: int, adversary: Adversary, rng) -> list:
    """Uniformly random honest-majority subset standing in for the start-up agreement."""
    ids = list(ids)
    size = min(size, len(ids))
    for _ in range(10_000):
        pick = sorted(ids[i] for i in rng.choice(len(ids), size=size, replace=False))
        if 2 * sum(adversary.is_corrupted(x) for x in pick) < size:
            return pick
    raise AssumptionViolated("assumption violated: no honest-majority committee found")


class _Loop:
    def __init__(self, cfg: ScenarioConfig, state: now.PartitionState, out_dir, dump_every):
        self.cfg = cfg
        self.state = state
        self.metrics = MetricsStream()
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.dump_every = dump_every
        self.window: list = []
        self.last_messages = state.meter.messages
        self.seen_events = len(state.events)
        self.ops_applied = 0
        self.majority_pairs = 0
        self.cluster_steps = 0
        self.sweep_failures: list = []
        self.sweep_passed = {s: True for s in cfg.sweeps}
        self.crash_reports: list = []

    # -- records -----------------------------------------------------------------
    def snapshot(self, kind: str, *, lam2: bool, **extra) -> dict:
        msgs = self.state.meter.messages - self.last_messages
        self.last_messages = self.state.meter.messages
        rec = snapshot_record(self.state, with_lambda2=lam2, messages=msgs, op_digests=self.window, kind=kind)
        rec.update(extra)
        self.window = []
        self.metrics.emit(rec)
        return rec

    def sweep(self) -> None:
        report = sweep_invariants(self.state, self.cfg.sweeps)
        for name, ok in report.passed().items():
            self.sweep_passed[name] &= ok
        self.sweep_failures += [(self.state.step, str(v)) for v in report.violations]
        self.metrics.emit({
            "kind": "sweep",
            "step": self.state.step,
            "violations": len(report.violations),
            "failed": sorted(s for s, ok in report.passed().items() if not ok),
        })

    def flush_events(self) -> None:
        new = self.state.events[self.seen_events:]
        self.seen_events = len(self.state.events)
        for ev in new:
            self.snapshot("event", lam2=False, event=ev[0], detail=[str(x) for x in ev[2:]])

    # -- operations ----------------------------------------------------------------
    def random_op(self, step: int, i: int) -> None:
        cfg, st = self.cfg, self.state
        crng = stream(cfg.seed, "churn", step * 1_000 + i)
        prng = stream(cfg.seed, "protocol", step * 1_000 + i)
        n = st.n
        want_join = crng.random() < cfg.p_join
        if n >= cfg.n_max:
            want_join = False
        elif n <= cfg.n_min:
            want_join = True
        if want_join:
            self.do_join(crng, prng)
        else:
            live = sorted(st.node_index)
            self.do_leave(live[int(crng.integers(len(live)))], prng)

    def do_join(self, crng, prng) -> None:
        st = self.state
        x = st.new_node_id()
        bad = decide_on_join(x, st.adversary.ledger, st.adversary.policy, st.n, st.adversary.rng)
        cids = sorted(st.clusters)
        contact = cids[int(crng.integers(len(cids)))]
        target = now.join(st, x, contact, prng)
        self.ops_applied += 1
        self.window.append({"op": "join", "node": x, "corrupted": bad, "cluster": target})

    def do_leave(self, node, prng) -> None:
        st = self.state
        home = st.node_index[node]
        now.leave(st, node, prng)
        self.ops_applied += 1
        self.window.append({"op": "leave", "node": node, "cluster": home})

    def scheduled(self, op: ScheduledOp) -> None:
        cfg, st = self.cfg, self.state
        step = st.step
        crng = stream(cfg.seed, "churn", 10**9 + step)
        prng = stream(cfg.seed, "protocol", 10**9 + step)
        if op.op == "join":
            self.do_join(crng, prng)
        elif op.op == "leave":
            node = op.args.get("node")
            if node is None:
                live = sorted(st.node_index)
                node = live[int(crng.integers(len(live)))]
            self.do_leave(node, prng)
        elif op.op == "crash_attack":
            eps = float(op.args.get("epsilon", cfg.epsilon))
            rep = crash_attack(st, eps, stream(cfg.seed, "attack", step))
            self.crash_reports.append(rep)
            self.window.append({"op": "crash", "count": len(rep.crashed)})
            self.snapshot(
                "event", lam2=True, event="crash_attack", crashed=len(rep.crashed),
                dead_clusters=len(rep.dead_clusters), flipped=len(rep.flipped_clusters),
                connected=st.overlay.graph.is_connected(),
            )
        elif op.op == "app_call":
            self.app_call(op.args)

    def app_call(self, args: dict) -> None:
        cfg, st = self.cfg, self.state
        rng = stream(cfg.seed, "app", st.step)
        app = args["app"]
        live = sorted(st.node_index)
        sender = args.get("sender", live[int(rng.integers(len(live)))])
        payload = str(args.get("payload", f"msg-{st.step}")).encode()
        if app == "broadcast_local":
            out = apps.broadcast_local(st, sender, payload, cfg.delta, cfg.c, rng=rng)
            rec = out.record()
            honest = [x for x in live if not st.is_corrupted(x)]
            rec["honest_delivery"] = sum(out.delivered[x] == payload for x in honest) / max(len(honest), 1)
        elif app == "broadcast_global":
            split = bool(args.get("equivocate", False))
            fake = payload + b"'"
            payloads = (lambda x: payload if x % 2 == 0 else fake) if split else None
            out = apps.broadcast_global(
                st, sender, payload, int(args.get("hash_bits", 32)), cfg.delta, rng=rng, c=cfg.c,
                sender_payloads=payloads,
            )
            rec = out.record()
        elif app == "agree":
            inputs = {x: int(b) for x, b in zip(live, rng.integers(0, 2, size=len(live)))}
            rec = apps.agree(st, inputs, rng=rng, delta=cfg.delta, c=cfg.c).record()
        elif app == "aggregate":
            inputs = {x: int(v) for x, v in zip(live, rng.integers(1, 11, size=len(live)))}
            rec = apps.aggregate_sum(st, inputs, int(args.get("r", 100)), cfg.delta, rng=rng, c=cfg.c).record()
        else:
            picks = apps.sample(st, sender, int(args.get("count", 100)), rng=rng)
            rec = {
                "kind": "sample",
                "count": len(picks),
                "malicious_fraction": sum(st.is_corrupted(x) for x in picks) / max(len(picks), 1),
                "picks_digest": digest(picks),
            }
        rec["result"] = rec.pop("kind")
        rec.update({"kind": "outcome", "step": st.step, "app": app})
        self.metrics.emit(rec)

    # -- main loop -----------------------------------------------------------------
    def run(self) -> None:
        cfg, st = self.cfg, self.state
        by_step: dict = {}
        for op in cfg.schedule:
            by_step.setdefault(op.step, []).append(op)
        remaining = cfg.ops
        spacing = max(cfg.delay, 1)
        for step in range(1, cfg.total_steps + 1):
            st.step = step
            if remaining and step % spacing == 0:
                batch = min(cfg.batch_size, remaining)
                for i in range(batch):
                    self.random_op(step, i)
                remaining -= batch
            churn = [o for o in by_step.get(step, ()) if o.op != "app_call"]
            calls = [o for o in by_step.get(step, ()) if o.op == "app_call"]
            for op in churn:
                self.scheduled(op)
            self.flush_events()
            # applications only run once the step's churn has settled
            for op in calls:
                self.scheduled(op)
            self.majority_pairs += len(st.malicious_majority())
            self.cluster_steps += len(st.clusters)
            if step % cfg.metrics_every == 0:
                self.snapshot("metrics", lam2=step % cfg.lambda2_every == 0)
                self.sweep()
            if self.dump_every and self.out_dir is not None and step % self.dump_every == 0:
                write_edge_list(st.overlay.graph, self.out_dir / f"overlay_{step:07d}.txt")


def run_scenario(cfg: ScenarioConfig, *, out_dir=None, dump_overlay_every: int | None = None, extra: Behavior = Behavior.NONE) -> RunResult:
    cfg.validate()
    state, info = initialize(cfg, extra)
    loop = _Loop(cfg, state, out_dir, dump_overlay_every)
    if loop.out_dir is not None:
        loop.out_dir.mkdir(parents=True, exist_ok=True)
    loop.snapshot("init", lam2=True, gk_steps=info["gk_steps"], gk_complete=info["gk_complete"])
    loop.sweep()
    loop.run()
    if state.step % cfg.metrics_every != 0 or state.step == 0:
        loop.snapshot("final", lam2=True)
        loop.sweep()
    summary = {
        "seed": cfg.seed,
        "steps": state.step,
        "ops_applied": loop.ops_applied,
        "n": state.n,
        "num_clusters": len(state.clusters),
        "gk_steps": info["gk_steps"],
        "gk_complete": info["gk_complete"],
        "committee": info["committee"],
        "corrupted_initial": info["corrupted_initial"],
        "messages": state.meter.messages,
        "splits": state.meter.splits,
        "merges": state.meter.merges,
        "majority_incidence": loop.majority_pairs / loop.cluster_steps if loop.cluster_steps else 0.0,
        "overlay_connected": state.overlay.graph.is_connected(),
        "sweeps": loop.sweep_passed,
        "violations": len(loop.sweep_failures),
        "passed": all(loop.sweep_passed.values()),
        "metrics_digest": digest(loop.metrics.dumps()),
    }
    result = RunResult(state, loop.metrics, summary, loop.sweep_failures)
    if loop.out_dir is not None:
        write_outputs(result, loop.out_dir)
    return result


def write_outputs(result: RunResult, out_dir: Path) -> None:
    from .metrics import dumps_record

    out_dir.mkdir(parents=True, exist_ok=True)
    result.metrics.write_jsonl(out_dir / "metrics.jsonl")
    (out_dir / "summary.csv").write_text(result.metrics.csv_summary())
    (out_dir / "summary.json").write_text(dumps_record(result.summary) + "\n")
    write_state(result.state, out_dir / "state.txt")


def run_targeted_attack(cfg: ScenarioConfig, *, out_dir=None) -> RunResult:
    """Initialize, then churn corrupted identities against one cluster."""
    from ..adversary import targeted_join_leave_attack

    cfg.validate()
    state, info = initialize(cfg, Behavior.TARGETED_JOIN_LEAVE)
    loop = _Loop(cfg, state, out_dir, None)
    loop.snapshot("init", lam2=True)
    target = cfg.target if cfg.target is not None else min(state.clusters)
    out = targeted_join_leave_attack(state, target, cfg.ops, cfg.exchange, stream(cfg.seed, "attack"))
    loop.flush_events()
    loop.metrics.emit({
        "kind": "attack",
        "step": state.step,
        "target": out.target,
        "captured_at": out.captured_at,
        "ops": out.ops,
        "peak_fraction": out.peak_fraction,
        "retargets": out.retargets,
        "exchange": cfg.exchange,
    })
    loop.snapshot("final", lam2=True)
    loop.sweep()
    summary = {
        "seed": cfg.seed,
        "preset": "targeted",
        "captured": out.captured_at is not None,
        "captured_at": out.captured_at,
        "exchange": cfg.exchange,
        "sweeps": loop.sweep_passed,
        "passed": all(loop.sweep_passed.values()),
    }
    result = RunResult(state, loop.metrics, summary, loop.sweep_failures)
    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result


def run_crash_attack(cfg: ScenarioConfig, *, out_dir=None) -> RunResult:
    """Run the configured churn, then crash an epsilon fraction at once."""
    import copy

    cfg = copy.deepcopy(cfg)
    cfg.schedule.append(ScheduledOp(step=cfg.total_steps + 1, op="crash_attack", args={"epsilon": cfg.epsilon}))
    result = run_scenario(cfg, extra=Behavior.CRASH_ATTACK)
    rep = [r for r in result.metrics.records if r.get("event") == "crash_attack"][-1]
    result.summary.update(preset="crash", crashed=rep["crashed"], dead_clusters=rep["dead_clusters"], flipped=rep["flipped"])
    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result
