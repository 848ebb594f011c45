import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from nowover import now
from nowover.harness import (
    ConfigError,
    ScenarioConfig,
    dumps_state,
    from_mapping,
    load_config,
    loads_state,
    read_jsonl,
    run_scenario,
    stream,
    sweep_invariants,
)
from nowover.harness.cli import main
from nowover.harness.metrics import analyze, dumps_record
from nowover.harness.snapshot import SnapshotError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _small(**kw):
    base = dict(seed=3, lam=2, k=2, tau=0.05, epsilon=0.02, n_initial=48, n_max=64, n_min=32, ops=120, metrics_every=20)
    base.update(kw)
    return ScenarioConfig(**base)


def _write_cfg(tmp_path, doc, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return p


# -- config -------------------------------------------------------------------------


def test_shipped_configs_load():
    for p in sorted(CONFIGS.glob("*.yaml")):
        load_config(p)


def test_config_errors_name_fields():
    with pytest.raises(ConfigError) as ei:
        from_mapping({"params": {"lam": 2, "l": 1.3, "tau": 0.3}, "population": {"n_initial": 4}})
    text = " ".join(ei.value.problems)
    assert "params.l:" in text
    assert "params.tau:" in text
    assert "population.n_initial:" in text


def test_config_unknown_keys():
    with pytest.raises(ConfigError) as ei:
        from_mapping({"params": {"lamda": 2}, "bogus": 1})
    assert "params.lamda: unknown key" in ei.value.problems
    assert "bogus: unknown section" in ei.value.problems


def test_config_overrides_allow_unsafe_values():
    cfg = from_mapping({"params": {"l": 1.3, "tau": 0.3}, "overrides": {"unsafe_tau": True, "small_l": True}})
    assert cfg.tau == 0.3 and cfg.l == 1.3


def test_config_schedule_validation():
    with pytest.raises(ConfigError) as ei:
        from_mapping({"churn": {"schedule": [{"step": 0, "op": "explode"}, {"step": 3, "op": "app_call", "args": {"app": "x"}}]}})
    text = " ".join(ei.value.problems)
    assert "churn.schedule[0].op" in text and "churn.schedule[0].step" in text
    assert "churn.schedule[1].args.app" in text


def test_total_steps():
    assert _small(ops=10, batch_size=3).total_steps == 4
    assert _small(ops=10, delay=5).total_steps == 50
    assert _small(ops=0, schedule=[{"step": 7, "op": "join"}]).total_steps == 7


def test_streams_are_independent():
    a = stream(1, "churn", 5).random(4)
    assert np.array_equal(a, stream(1, "churn", 5).random(4))
    assert not np.array_equal(a, stream(1, "adversary", 5).random(4))
    assert not np.array_equal(a, stream(1, "churn", 6).random(4))
    with pytest.raises(KeyError):
        stream(1, "nope")


# -- runs ---------------------------------------------------------------------------


def test_empty_schedule_gives_init_only():
    res = run_scenario(_small(ops=0))
    kinds = [r["kind"] for r in res.metrics.records]
    assert kinds.count("init") == 1
    assert "metrics" not in kinds
    init = res.metrics.of_kind("init")[0]
    assert res.state.n == init["n"] == 48
    assert res.summary["ops_applied"] == 0
    assert res.passed


def test_runs_are_deterministic():
    a = run_scenario(_small())
    b = run_scenario(_small())
    assert a.metrics.dumps() == b.metrics.dumps()
    c = run_scenario(_small(seed=4))
    assert a.metrics.dumps() != c.metrics.dumps()


def test_default_config_run_passes():
    cfg = load_config(CONFIGS / "default.yaml")
    res = run_scenario(cfg)
    assert res.passed, res.sweep_failures[:5]
    outcomes = res.metrics.of_kind("outcome")
    assert [o["app"] for o in outcomes] == ["broadcast_local", "aggregate", "sample"]
    assert outcomes[0]["honest_delivery"] == 1.0


@pytest.mark.slow
def test_long_default_run_has_no_violations():
    cfg = load_config(CONFIGS / "default.yaml")
    cfg.ops = 10_000
    cfg.schedule = []
    cfg.metrics_every = 100
    res = run_scenario(cfg)
    assert res.summary["violations"] == 0
    sweeps = res.metrics.of_kind("sweep")
    assert len(sweeps) == 101 and all(s["violations"] == 0 for s in sweeps)


def test_one_op_per_step_and_batches():
    res = run_scenario(_small(ops=40))
    assert res.summary["steps"] == 40 and res.summary["ops_applied"] == 40
    res = run_scenario(_small(ops=40, batch_size=4, metrics_every=5))
    assert res.summary["steps"] == 10 and res.summary["ops_applied"] == 40
    # every applied op is digested into exactly one record window
    assert sum(r.get("ops", 0) for r in res.metrics.records) == 40


def test_delay_spaces_churn():
    res = run_scenario(_small(ops=6, delay=3, metrics_every=3))
    assert res.summary["steps"] == 18
    assert [r["ops"] for r in res.metrics.of_kind("metrics")] == [1] * 6


def test_population_bounds_respected():
    res = run_scenario(_small(ops=300, p_join=1.0, n_max=56, metrics_every=10))
    assert max(r["n"] for r in res.metrics.of_kind("metrics")) <= 56
    res = run_scenario(_small(ops=300, p_join=0.0, n_min=40, metrics_every=10))
    assert min(r["n"] for r in res.metrics.of_kind("metrics")) >= 40


def test_app_calls_run_at_quiescent_points():
    cfg = _small(ops=40, schedule=[
        {"step": 10, "op": "app_call", "args": {"app": "broadcast_global", "equivocate": True}},
        {"step": 20, "op": "app_call", "args": {"app": "agree"}},
        {"step": 30, "op": "leave", "args": {}},
    ])
    res = run_scenario(cfg)
    outs = res.metrics.of_kind("outcome")
    assert outs[0]["app"] == "broadcast_global" and outs[0]["aborted"]
    assert outs[1]["app"] == "agree" and outs[1]["decided"] in (0, 1)
    assert res.summary["ops_applied"] == 41


def test_assumption_violation_is_reported():
    from nowover.adversary import AssumptionViolated

    cfg = _small(node_graph_p=0.0)
    with pytest.raises(AssumptionViolated):
        run_scenario(cfg)


def test_split_and_merge_events_are_recorded():
    res = run_scenario(_small(ops=400, exchange=True))
    events = [r["event"] for r in res.metrics.of_kind("event")]
    assert events.count("split") == res.summary["splits"]
    assert events.count("merge") == res.summary["merges"]
    assert res.summary["splits"] + res.summary["merges"] > 0


# -- sweeps ------------------------------------------------------------------------------


def _fresh():
    return now.clusterize(range(64), now.NowParams(lam=2, k=2), np.random.default_rng(0))


def test_fresh_state_has_no_violations():
    assert sweep_invariants(_fresh()).violations == []


def test_duplicated_node_gives_one_violation():
    st = _fresh()
    x = st.clusters[0].members[0]
    st.clusters[1].members.append(x)
    rep = sweep_invariants(st, enabled=("partition",))
    assert rep.count("partition") == 1


def test_sweeps_catch_each_fault():
    st = _fresh()
    st.clusters[0].members = st.clusters[0].members[:2]
    st.clusters[0].neighbor_view.clear()
    st.overlay.graph.add_vertex(99)
    rep = sweep_invariants(st)
    failed = {k for k, ok in rep.passed().items() if not ok}
    assert {"partition", "size_band", "views", "overlay"} <= failed


def test_honest_majority_sweep():
    st = _fresh()
    c = st.clusters[2]
    for x in c.members[:5]:
        st.adversary.ledger.corrupted.add(x)
    rep = sweep_invariants(st, enabled=("honest_majority",))
    assert rep.count("honest_majority") >= 1


# -- snapshots ----------------------------------------------------------------------------


def test_snapshot_round_trip():
    res = run_scenario(_small(tau=0.05, ops=60))
    text = dumps_state(res.state)
    back = loads_state(text)
    assert dumps_state(back) == text
    assert sweep_invariants(back).passed() == sweep_invariants(res.state).passed()
    assert back.sizes() == res.state.sizes()


def test_snapshot_errors():
    with pytest.raises(SnapshotError):
        loads_state("hello\n")
    with pytest.raises(SnapshotError):
        loads_state("nowover-state 1\nparams lam=2\n")


# -- metrics ------------------------------------------------------------------------------


def test_records_are_canonical():
    line = dumps_record({"b": 1.0 / 3.0, "a": [np.int64(2), np.float64(0.5)], "c": None})
    assert line == '{"a":[2,0.5],"b":0.333333333333,"c":null}'


def test_metrics_record_fields():
    res = run_scenario(_small(ops=40))
    rec = res.metrics.of_kind("metrics")[0]
    for key in ("step", "n", "num_clusters", "min_size", "max_size", "mean_size",
                "max_malicious_fraction", "lambda2", "max_degree", "messages", "ops_digest"):
        assert key in rec
    csv = res.metrics.csv_summary().splitlines()
    assert csv[0].startswith("step,n,num_clusters") and len(csv) >= 3


def test_analyze_tables(tmp_path):
    res = run_scenario(_small(ops=40), out_dir=tmp_path)
    records = read_jsonl(tmp_path / "metrics.jsonl")
    assert len(records) == len(res.metrics.records)
    text = analyze(records)
    assert "num_clusters" in text or "clusters" in text


# -- CLI ----------------------------------------------------------------------------------


def test_cli_run_writes_outputs(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {
        "seed": 1, "params": {"lam": 2, "k": 2, "tau": 0.05, "epsilon": 0.02},
        "population": {"n_initial": 48, "n_max": 64, "n_min": 32}, "churn": {"ops": 30},
        "run": {"metrics_every": 10},
    })
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out), "--dump-overlay", "10"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["passed"] is True
    for name in ("metrics.jsonl", "summary.csv", "summary.json", "state.txt"):
        assert (out / name).exists()
    assert len(list(out.glob("overlay_*.txt"))) == 3
    assert main(["sweep", "--state", str(out / "state.txt")]) == 0
    assert main(["analyze", "--metrics", str(out / "metrics.jsonl")]) == 0


def test_cli_seed_override_changes_stream(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"params": {"lam": 2}, "population": {"n_initial": 48}, "churn": {"ops": 20}})
    main(["run", "--config", str(cfg), "--seed", "1"])
    a = json.loads(capsys.readouterr().out)["metrics_digest"]
    main(["run", "--config", str(cfg), "--seed", "2"])
    b = json.loads(capsys.readouterr().out)["metrics_digest"]
    assert a != b


def test_cli_sweep_fails_on_corrupt_state(tmp_path):
    st = _fresh()
    st.clusters[1].members.append(st.clusters[0].members[0])
    p = tmp_path / "bad.txt"
    p.write_text(dumps_state(st))
    assert main(["sweep", "--state", str(p)]) == 1


def test_cli_exit_code_for_bad_config(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"params": {"tau": 0.45}})
    assert main(["run", "--config", str(cfg)]) == 2
    assert "params.tau" in capsys.readouterr().err


def test_cli_exit_code_for_failed_sweeps(tmp_path):
    # clusters of 4 with 45% corrupted nodes: some cluster loses its honest majority
    cfg = _write_cfg(tmp_path, {
        "seed": 0, "params": {"lam": 2, "k": 1, "tau": 0.45}, "population": {"n_initial": 64},
        "churn": {"ops": 10}, "run": {"metrics_every": 5},
        "overrides": {"unsafe_tau": True, "demo": True},
        "sweeps": ["partition", "honest_majority"],
    })
    assert main(["run", "--config", str(cfg)]) == 1


def test_cli_attack_presets(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {
        "seed": 2, "params": {"lam": 2, "k": 2, "tau": 0.05, "epsilon": 0.1},
        "population": {"n_initial": 96}, "churn": {"ops": 40},
        "adversary": {"join_rule": "budgeted_targeted"},
    })
    assert main(["attack", "--preset", "targeted", "--config", str(cfg)]) in (0, 1)
    summary = json.loads(capsys.readouterr().out)
    assert summary["preset"] == "targeted" and "captured" in summary
    assert main(["attack", "--preset", "crash", "--config", str(cfg)]) in (0, 1)
    summary = json.loads(capsys.readouterr().out)
    assert summary["preset"] == "crash" and summary["crashed"] >= 1


def test_console_script_module():
    out = subprocess.run([sys.executable, "-m", "nowover.harness.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "attack" in out.stdout
