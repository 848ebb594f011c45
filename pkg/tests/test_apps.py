import math

import numpy as np
import pytest
from scipy import stats

from nowover import apps, now, over
from nowover.adversary import Adversary, AdversaryPolicy, Behavior, corrupt_initial
from nowover.ctrw import Bias, endpoint_distribution, tv_distance
from nowover.graph import Graph

TAU_NEAR_BOUND = 1 / (2 * 1.5**2) - 0.05


def _state(n, *, lam=2, k=2, tau=0.0, seed=0, behavior=Behavior.NONE, **kw):
    pol = AdversaryPolicy(tau=tau, behavior=behavior)
    rng = np.random.default_rng(seed)
    adv = Adversary(pol, corrupt_initial(range(n), pol, np.random.default_rng(seed + 50)), np.random.default_rng(seed + 60))
    return now.clusterize(range(n), now.NowParams(lam=lam, k=k, tau=tau, **kw), rng, adv), rng


def _single_cluster(members, lam=2):
    st = now.PartitionState(now.NowParams(lam=lam, k=1), over.OverlayState(Graph([0]), lam, keep_history=False))
    st._new_cluster(0)
    for x in members:
        st._insert(x, 0)
    st._next_cluster = 1
    return st


def test_gossip_rounds():
    assert apps.gossip_rounds(2, 0.01, 4) == math.ceil(4 * (2 + math.log(100)) * 4)
    with pytest.raises(ValueError):
        apps.gossip_rounds(2, 1.0, 4)


def test_keyed_hash_width():
    h = apps.keyed_hash(b"abc", 32)
    assert 0 <= h < 2**32
    assert h == apps.keyed_hash(b"abc", 32)
    assert h != apps.keyed_hash(b"abd", 32)
    with pytest.raises(ValueError):
        apps.keyed_hash(b"x", 65)


# -- broadcast -----------------------------------------------------------------------


def test_broadcast_single_cluster():
    st = _single_cluster(range(6))
    out = apps.broadcast_local(st, 2, b"hi", rng=np.random.default_rng(0))
    assert out.rounds == 1
    assert set(out.delivered.values()) == {b"hi"}
    assert out.messages == 36


def test_broadcast_dead_sender():
    st, rng = _state(64)
    with pytest.raises(ValueError):
        apps.broadcast_local(st, 999, b"x", rng=rng)


def test_broadcast_all_honest_16_clusters():
    for seed in range(100):
        st, rng = _state(128, seed=seed)
        assert len(st.clusters) == 16
        out = apps.broadcast_local(st, 0, b"payload", 0.01, 4, rng=rng)
        assert all(v == b"payload" for v in out.delivered.values()), seed
        assert not out.aborted


def test_broadcast_silent_adversary():
    ok = 0
    for seed in range(100):
        st, rng = _state(288, lam=3, tau=TAU_NEAR_BOUND, behavior=Behavior.SILENT, seed=seed)
        sender = next(x for x in sorted(st.node_index) if not st.is_corrupted(x))
        out = apps.broadcast_local(st, sender, b"m", 0.01, 4, rng=rng)
        honest = {v for x, v in out.delivered.items() if not st.is_corrupted(x)}
        ok += honest == {b"m"}
    assert ok >= 99


def test_broadcast_consistency_under_equivocating_forwarders():
    for seed in range(10):
        st, rng = _state(288, lam=3, tau=TAU_NEAR_BOUND, behavior=Behavior.EQUIVOCATE, seed=seed)
        sender = next(x for x in sorted(st.node_index) if not st.is_corrupted(x))
        out = apps.broadcast_local(st, sender, b"m", rng=rng)
        honest = {v for x, v in out.delivered.items() if not st.is_corrupted(x)} - {None}
        assert honest <= {b"m"}
        assert st.transport.unsound == 0


def test_broadcast_message_slope():
    ns = [64, 128, 256]
    units = []
    for n in ns:
        per = []
        for seed in range(5):
            st, rng = _state(n, seed=seed)
            per.append(apps.broadcast_local(st, 0, b"m", rng=rng).messages)
        units.append(np.mean(per))
    slope = np.polyfit(np.log(ns), np.log(units), 1)[0]
    assert 0.8 <= slope <= 1.3, slope


def test_broadcast_global_honest():
    st, rng = _state(128)
    out = apps.broadcast_global(st, 0, b"hello", 32, rng=rng)
    assert not out.aborted and not out.alarms
    assert set(out.delivered.values()) == {b"hello"}


def test_broadcast_global_equivocation_aborts():
    for seed in range(100):
        st, rng = _state(128, seed=seed)
        cids = sorted(st.clusters)
        half = set(cids[: len(cids) // 2])
        out = apps.broadcast_global(
            st, 0, b"A", 32, rng=rng,
            sender_payloads=lambda x: b"A" if st.node_index[x] in half else b"B",
        )
        assert out.aborted, seed


def test_broadcast_global_equivocation_inside_one_cluster():
    for seed in range(100):
        st, rng = _state(128, seed=seed)
        victim = sorted(st.clusters)[3]
        members = st.clusters[victim].members
        odd = set(members[: (len(members) - 1) // 2])  # a minority gets B
        out = apps.broadcast_global(st, 0, b"A", 32, rng=rng, sender_payloads=lambda x: b"B" if x in odd else b"A")
        honest = {v for x, v in out.delivered.items() if not st.is_corrupted(x)}
        assert b"B" not in honest
        if not out.aborted:
            assert honest == {b"A"}


# -- agreement -------------------------------------------------------------------------


def test_agree_validity():
    st, rng = _state(128)
    out = apps.agree(st, {x: 1 for x in st.node_index}, initiator=0, rng=rng)
    assert out.decided == 1
    assert set(out.outputs.values()) == {1}


def test_agree_unknown_initiator():
    st, rng = _state(64)
    with pytest.raises(ValueError):
        apps.agree(st, {x: 0 for x in st.node_index}, initiator=99, rng=rng)


def test_agree_mixed_inputs():
    for seed in range(100):
        st, rng = _state(128, tau=0.1, seed=seed)
        inputs = {x: int(b) for x, b in zip(sorted(st.node_index), rng.integers(0, 2, st.n))}
        honest_major = [c for c in sorted(st.clusters) if 2 * st.clusters[c].malicious < len(st.clusters[c])]
        out = apps.agree(st, inputs, initiator=honest_major[0], rng=rng)
        honest = {v for x, v in out.outputs.items() if not st.is_corrupted(x)}
        assert len(honest) == 1
        assert out.decided in set(inputs.values())


def test_agree_probabilistic_initiation():
    found = small = 0
    for seed in range(100):
        st, rng = _state(256, seed=seed)
        try:
            out = apps.agree(st, {x: x % 2 for x in st.node_index}, rng=rng)
        except RuntimeError:
            continue
        found += 1
        small += len(out.initiators) <= 4 * st.params.lam
        assert out.windows <= st.params.lam + 1
    assert found >= 99
    assert small >= 95


# -- aggregation --------------------------------------------------------------------------


def test_aggregate_rejects_bad_inputs():
    st, rng = _state(64)
    with pytest.raises(ValueError):
        apps.aggregate_sum(st, {x: 0 for x in st.node_index}, 10, rng=rng)
    with pytest.raises(ValueError):
        apps.aggregate_sum(st, {x: 1 for x in st.node_index}, 0, rng=rng)


def test_aggregate_single_repetition_mean():
    st = _single_cluster(range(5))
    inputs = {x: x + 1 for x in range(5)}  # S = 15
    rng = np.random.default_rng(0)
    w = [1 / apps.aggregate_sum(st, inputs, 1, rng=rng).estimate for _ in range(10_000)]
    assert np.mean(w) == pytest.approx(1 / 15, rel=0.03)


def test_aggregate_concentrates():
    good = 0
    for seed in range(100):
        st, rng = _state(128, seed=seed)
        inputs = {x: int(v) for x, v in zip(sorted(st.node_index), rng.integers(1, 10, st.n))}
        out = apps.aggregate_sum(st, inputs, 1000, rng=rng)
        assert np.all(out.w_mins > 0)
        assert out.estimate == pytest.approx(out.r / out.w_mins.sum())
        good += abs(out.estimate - out.true_sum) / out.true_sum <= 0.1
    assert good >= 95


def test_aggregate_min_rate_additivity():
    st, rng = _state(12, lam=1, k=1)
    assert len(st.clusters) == 12
    out = apps.aggregate_sum(st, {x: 1 for x in st.node_index}, 3000, rng=rng)
    assert out.converged
    assert stats.kstest(out.w_mins, "expon", args=(0, 1 / 12)).pvalue > 0.01


def test_aggregate_scale_covariance():
    base, scaled = [], []
    for seed in range(200):
        st, rng = _state(64, seed=seed)
        inputs = {x: 1 + x % 3 for x in st.node_index}
        base.append(apps.aggregate_sum(st, inputs, 20, rng=rng).estimate)
        st, rng = _state(64, seed=seed + 10_000)
        scaled.append(apps.aggregate_sum(st, {x: 10 * v for x, v in inputs.items()}, 20, rng=rng).estimate)
    qs = [0.1, 0.25, 0.5, 0.75, 0.9]
    ratio = np.quantile(scaled, qs) / np.quantile(base, qs)
    assert np.all(np.abs(ratio - 10) <= 1.0), ratio
    assert stats.ks_2samp(np.array(scaled) / 10, base).pvalue > 0.01


# -- sampling ---------------------------------------------------------------------------


def test_sample_single_cluster():
    st = _single_cluster([0, 1])
    out = apps.sample(st, 0, 4000, rng=np.random.default_rng(0))
    assert set(out) == {0, 1}
    assert np.mean(np.array(out) == 0) == pytest.approx(0.5, abs=0.03)


def test_sample_unknown_requester():
    st, rng = _state(64)
    with pytest.raises(ValueError):
        apps.sample(st, 999, 1, rng=rng)


def _exact_node_law(st, requester):
    g = st.overlay.graph
    weights = None
    if st.params.bias is Bias.CLUSTER_SIZE_WEIGHTED:
        weights = {cid: len(c.members) / st.params.lam**2 for cid, c in st.clusters.items()}
    p_cluster = endpoint_distribution(g, st.node_index[requester], st.walk_time, weights)
    law = {}
    for pc, cid in zip(p_cluster, g.vertices):
        members = st.clusters[cid].members
        for x in members:
            law[x] = pc / len(members)
    return law


def test_sample_exact_law_near_uniform_200_nodes():
    # size-weighted walks land on a cluster in proportion to its size, so a
    # uniform member of the landing cluster is close to a uniform node
    st, rng = _state(192, k=3, seed=4, bias=Bias.CLUSTER_SIZE_WEIGHTED)
    for i in range(600):
        if i % 2 == 0:
            now.join(st, st.new_node_id(), now._any_cluster(st, rng), rng)
        else:
            nodes = sorted(st.node_index)
            now.leave(st, nodes[int(rng.integers(len(nodes)))], rng)
    nodes = sorted(st.node_index)
    law = _exact_node_law(st, nodes[0])
    p = np.array([law[x] for x in nodes])
    assert tv_distance(p, np.full(len(nodes), 1 / len(nodes))) <= 0.05
    # the sampler follows that law
    draws = apps.sample(st, nodes[0], 10_000, rng=rng)
    idx = {x: i for i, x in enumerate(nodes)}
    counts = np.bincount([idx[x] for x in draws], minlength=len(nodes))
    assert stats.chisquare(counts, p * len(draws)).pvalue > 0.001


def test_uniform_walk_sampling_favours_small_clusters():
    st, rng = _state(192, k=3, seed=4)
    for i in range(600):
        if i % 2 == 0:
            now.join(st, st.new_node_id(), now._any_cluster(st, rng), rng)
        else:
            nodes = sorted(st.node_index)
            now.leave(st, nodes[int(rng.integers(len(nodes)))], rng)
    nodes = sorted(st.node_index)
    law = _exact_node_law(st, nodes[0])
    small = min(st.clusters.values(), key=len)
    big = max(st.clusters.values(), key=len)
    assert law[small.members[0]] > law[big.members[0]]


def test_sample_malicious_fraction():
    l, eps = 1.5, 0.1
    st, rng = _state(288, lam=3, tau=TAU_NEAR_BOUND, seed=2)
    draws = apps.sample(st, 0, 10_000, rng=rng)
    frac = np.mean([st.is_corrupted(x) for x in draws])
    assert frac <= l * l * TAU_NEAR_BOUND * (1 + eps)


def test_sample_autocorrelation():
    st, rng = _state(128, seed=6)
    draws = np.array(apps.sample(st, 0, 10_000, rng=rng), dtype=float)
    d = draws - draws.mean()
    lag1 = float((d[:-1] * d[1:]).sum() / (d * d).sum())
    assert abs(lag1) <= 0.05


def test_outcome_records_are_json_ready():
    import json

    st, rng = _state(64)
    rec = apps.broadcast_local(st, 0, b"x", rng=rng).record()
    assert rec["kind"] == "broadcast" and rec["delivered"] == 64
    json.dumps(rec)
    json.dumps(apps.agree(st, {x: 1 for x in st.node_index}, initiator=0, rng=rng).record())
    json.dumps(apps.aggregate_sum(st, {x: 1 for x in st.node_index}, 5, rng=rng).record())
