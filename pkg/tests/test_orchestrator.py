import json
from pathlib import Path

import numpy as np
import pytest

from d2k_pipeline.orchestrator import (
    ConfigError,
    PipelineError,
    apply_directive,
    k2d_directives,
    load_pipeline_config,
    open_store_client,
    run_benchmark,
    run_nightly,
    run_site,
)
from d2k_pipeline.store import DatasetQuery
from d2k_pipeline.sweep import SweepCoordinator

from conftest import write_pipeline_config, write_two_link_model


@pytest.fixture()
def tiny_config(tmp_path):
    model_path = write_two_link_model(tmp_path / "two_link.yaml")
    config_path = write_pipeline_config(tmp_path, model_path)
    return load_pipeline_config(config_path)


def test_config_loading_and_validation(tmp_path):
    model_path = write_two_link_model(tmp_path / "two_link.yaml")
    config_path = write_pipeline_config(tmp_path, model_path)
    config = load_pipeline_config(config_path)
    assert [s.site for s in config.sites] == ["llt", "wzl"]
    assert config.benchmark.target_site == "wzl"
    assert config.schedule == "02:00"
    with pytest.raises(ConfigError):
        write_pipeline_config(tmp_path, model_path, schedule="25:00")
        load_pipeline_config(tmp_path / "pipeline.yaml")


def test_run_site_ingests_configured_mix(tiny_config):
    result = run_site(tiny_config, "llt")
    assert len(result.record_ids) == 6  # 4 train + 2 validation
    store = open_store_client(tiny_config.store_endpoint)
    records = store.query(DatasetQuery(instance_ids={"llt-arm"}))
    assert len(records) == 6
    purposes = sorted(r.purpose for r in records)
    assert purposes == ["train"] * 4 + ["validation"] * 2
    for record in records:
        assert record.instance_id == "llt-arm"
        assert record.software_commit == "unversioned"
        assert 0 < record.velocity_scaling <= 1
        assert 0 < record.acceleration_scaling <= 1
        # retrievable via a purpose-filtered query right away
        assert record.record_id in {
            r.record_id
            for r in store.query(DatasetQuery(purpose=record.purpose))}


def test_run_site_rerun_same_payload_new_ids(tiny_config):
    first = run_site(tiny_config, "llt")
    second = run_site(tiny_config, "llt")
    store = open_store_client(tiny_config.store_endpoint)
    records = {r.record_id: r for r in store.query(DatasetQuery())}
    assert set(first.record_ids).isdisjoint(second.record_ids)
    for id1, id2 in zip(first.record_ids, second.record_ids):
        r1, r2 = records[id1], records[id2]
        assert np.array_equal(r1.q, r2.q)
        assert np.array_equal(r1.tau, r2.tau)


def test_nightly_once_runs_three_steps(tiny_config):
    for site in ("llt", "wzl"):
        run_site(tiny_config, site)
    report = run_nightly(tiny_config, once=True)
    steps = [s["step"] for s in report["steps"]]
    assert steps == ["statistics", "sweep", "gate"]
    assert report["ok"] is True
    stats_path = Path(report["steps"][0]["stats_path"])
    assert stats_path.exists()
    stats = json.loads(stats_path.read_text())
    assert stats["total_trajectories"] == 12
    assert report["steps"][1]["configs_trained"] == 2
    decisions = report["steps"][2]["decisions"]
    assert len(decisions) == 2
    assert decisions[0]["accepted"] is True  # first result always improves

    coordinator = SweepCoordinator(tiny_config.sweep_endpoint[4:])
    best_id, best_loss = coordinator.best("foundation")
    assert best_loss == min(d["cross_validation_loss"] for d in decisions)


def test_nightly_aborts_on_empty_store(tiny_config):
    with pytest.raises(PipelineError, match="empty training view"):
        run_nightly(tiny_config, once=True)


def test_nightly_rerun_never_degrades_best(tiny_config):
    for site in ("llt", "wzl"):
        run_site(tiny_config, site)
    run_nightly(tiny_config, once=True)
    coordinator = SweepCoordinator(tiny_config.sweep_endpoint[4:])
    _, best_before = coordinator.best("foundation")
    run_nightly(tiny_config, once=True)
    _, best_after = coordinator.best("foundation")
    assert best_after <= best_before


def test_k2d_scan_and_apply(tmp_path):
    model_path = write_two_link_model(tmp_path / "two_link.yaml")
    # joint 1 restricted to the lower half of its range
    sites = [
        {"site": "llt", "instance_id": "llt-arm", "seed": 1,
         "counts": {"train": 6, "validation": 0, "evaluation": 0},
         "waypoint_q_max": [3.1, 0.0]},
    ]
    config_path = write_pipeline_config(tmp_path, model_path, sites=sites)
    config = load_pipeline_config(config_path)
    run_site(config, "llt")
    store = open_store_client(config.store_endpoint)

    directives = k2d_directives(config, store=store)
    assert directives, "restricted corpus must produce directives"
    # the emptied upper half of joint 1 must be targeted
    starved = [d for d in directives
               if d.joint_index == 1 and d.interval[0] >= -0.1]
    assert starved

    def min_occupancy(joint):
        _, counts = store.histogram(DatasetQuery(purpose="train"), joint,
                                    config.k2d.n_bins)
        return min(counts)

    before = min_occupancy(1)
    targeted = {}
    for directive in directives:
        _, counts_before = store.histogram(DatasetQuery(purpose="train"),
                                           directive.joint_index,
                                           config.k2d.n_bins)
        ids = apply_directive(config, directive, store=store)
        assert len(ids) == directive.requested_trajectories
        _, counts_after = store.histogram(DatasetQuery(purpose="train"),
                                          directive.joint_index,
                                          config.k2d.n_bins)
        edges = np.linspace(-3.1, 3.1, config.k2d.n_bins + 1)
        bin_index = int(np.searchsorted(edges, directive.interval[0] + 1e-9)) - 1
        bin_index = max(0, min(bin_index, config.k2d.n_bins - 1))
        assert counts_after[bin_index] > counts_before[bin_index]
    after = min_occupancy(1)
    assert after > before


def test_k2d_degenerate_histogram_rejected(tiny_config):
    store = open_store_client(tiny_config.store_endpoint)
    from d2k_pipeline.orchestrator import ensure_store_setup

    ensure_store_setup(tiny_config, store)
    with pytest.raises(PipelineError, match="degenerate"):
        k2d_directives(tiny_config, store=store)


def test_uniform_corpus_produces_no_directives(tmp_path):
    model_path = write_two_link_model(tmp_path / "two_link.yaml")
    sites = [{"site": "llt", "instance_id": "llt-arm", "seed": 5,
              "counts": {"train": 40, "validation": 0, "evaluation": 0},
              "n_waypoints": 8}]
    config_path = write_pipeline_config(
        tmp_path, model_path, sites=sites,
        k2d={"n_bins": 4, "threshold": 0.5, "trajectories_per_directive": 1})
    config = load_pipeline_config(config_path)
    run_site(config, "llt")
    assert k2d_directives(config) == []


def test_micro_benchmark_produces_artifacts(tmp_path):
    model_path = write_two_link_model(tmp_path / "two_link.yaml")
    sites = [
        {"site": "llt", "instance_id": "llt-arm", "seed": 1,
         "counts": {"train": 4, "validation": 2, "evaluation": 0},
         "perturbation": {"mass_scale": 1.05}},
        {"site": "ita", "instance_id": "ita-arm", "seed": 2,
         "counts": {"train": 4, "validation": 2, "evaluation": 0},
         "perturbation": {"mass_scale": 0.95}},
        {"site": "wzl", "instance_id": "wzl-arm", "seed": 3,
         "counts": {"train": 4, "validation": 2, "evaluation": 0},
         "perturbation": {"payload_mass": 0.3}},
    ]
    config_path = write_pipeline_config(
        tmp_path, model_path, sites=sites,
        benchmark={"target_site": "wzl", "seeds": [0], "configs_per_round": 2,
                   "foundation_configs": 1, "epochs": 2, "foundation_epochs": 2,
                   "folds": 2, "sequence_length": 16, "batch_size": 8,
                   "foundation_hidden": 16, "foundation_layers": 1,
                   "max_unfrozen": 1})
    config = load_pipeline_config(config_path)
    for site in ("llt", "ita", "wzl"):
        run_site(config, site)
    summary = run_benchmark(config)

    setups = [r["setup"] for r in summary["results"]]
    assert setups == ["end_to_end", "finetune_foundation",
                      "finetune_instance_known_hp",
                      "finetune_instance_unknown_hp"]
    known = summary["results"][2]
    assert len(known["run_wall_times"]) == 1  # known-hp setup: exactly 1 run
    assert len(summary["results"][0]["run_wall_times"]) == 2
    # fine-tune setups leave at least one group bit-identical to the parent
    for result in summary["results"][1:]:
        assert all(f >= 1 for f in result["frozen_groups_per_run"])
    assert all(f == 0 for f in summary["results"][0]["frozen_groups_per_run"])

    report_dir = Path(config.report_dir)
    for name in ("runtime.csv", "mae_trace.csv", "runtime_boxplot.svg",
                 "validation_mae_trends.svg", "benchmark_summary.json"):
        assert (report_dir / name).exists()
    # CSV row count equals total runs across setups
    rows = (report_dir / "runtime.csv").read_text().strip().splitlines()
    assert len(rows) - 1 == sum(len(r["run_wall_times"])
                                for r in summary["results"])


def test_benchmark_requires_second_instance(tmp_path):
    model_path = write_two_link_model(tmp_path / "two_link.yaml")
    sites = [{"site": "wzl", "instance_id": "wzl-arm", "seed": 3,
              "counts": {"train": 4, "validation": 2, "evaluation": 0}}]
    config_path = write_pipeline_config(tmp_path, model_path, sites=sites)
    config = load_pipeline_config(config_path)
    run_site(config, "wzl")
    with pytest.raises(PipelineError):
        run_benchmark(config)
