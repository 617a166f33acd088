"""Four-setup transfer-learning benchmark.

Setups (one repository target per setup and seed, so gates stay separate):

  A  end_to_end                    random init, all groups trainable, sweep
  B  finetune_foundation           from the foundation best, sweep
  C  finetune_instance_known_hp    from the instance model, stored best
                                   hyperparameters, exactly one run
  D  finetune_instance_unknown_hp  from the instance model, sweep

The instance model is built on first need as setup B's best checkpoint.
Wall times cover the train()/finetune() calls only: data generation,
evaluation, and report rendering are outside the measured boundary.  Every
run in every setup uses the same epoch budget.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import load_robot_model
from ..learner import (
    Provenance,
    finetune,
    init_model,
    sequences_from_records,
    theoretical_max_mae,
    train,
)
from ..store import DatasetQuery, dataset_content_hash
from .clients import open_store_client, open_sweep_client
from .config import PipelineConfig
from .pipeline import PipelineError, _checkpoint_from_doc, ensure_store_setup
from .reports import render_reports

SETUP_ORDER = ("end_to_end", "finetune_foundation",
               "finetune_instance_known_hp", "finetune_instance_unknown_hp")


@dataclass
class SetupResult:
    setup: str
    seed: int
    run_wall_times: list = field(default_factory=list)
    run_cv_losses: list = field(default_factory=list)
    run_val_maes: list = field(default_factory=list)
    epoch_traces: list = field(default_factory=list)
    frozen_groups_per_run: list = field(default_factory=list)

    @property
    def total_wall_time(self) -> float:
        return float(sum(self.run_wall_times))

    @property
    def best_val_mae(self) -> float:
        return float(min(self.run_val_maes))

    @property
    def first_run_val_mae(self) -> float:
        return float(self.run_val_maes[0])

    def to_json_dict(self) -> dict:
        return {
            "setup": self.setup, "seed": self.seed,
            "run_wall_times": self.run_wall_times,
            "run_cv_losses": self.run_cv_losses,
            "run_val_maes": self.run_val_maes,
            "epoch_traces": self.epoch_traces,
            "frozen_groups_per_run": self.frozen_groups_per_run,
            "total_wall_time": self.total_wall_time,
            "best_val_mae": self.best_val_mae,
            "first_run_val_mae": self.first_run_val_mae,
        }


def _count_identical_groups(child_weights, parent_weights) -> int:
    identical = 0
    for ga, gb in zip(child_weights, parent_weights):
        if all(np.array_equal(ga[k], gb[k]) for k in ga):
            identical += 1
    return identical


def _finetune_space(parent_hp, bench, n_groups: int) -> dict:
    return {
        "n_recurrent_layers": {"fixed": parent_hp.n_recurrent_layers},
        "hidden_size": {"fixed": parent_hp.hidden_size},
        "learning_rate": {"log_uniform": [1e-3, 1e-2]},
        "sequence_length": {"fixed": bench.sequence_length},
        "batch_size": {"fixed": bench.batch_size},
        "epochs": {"fixed": bench.epochs},
        # always leave at least one group frozen (that's the point of
        # fine-tuning); deeper unfreezing stays available through config
        "unfrozen_layers": {"int_range": [1, max(1, min(bench.max_unfrozen,
                                                        n_groups - 1, 5))]},
    }


def _end_to_end_space(bench) -> dict:
    return {
        "n_recurrent_layers": {"int_range": [1, 3]},
        "hidden_size": {"choice": [16, 32, 64]},
        "learning_rate": {"log_uniform": [1e-3, 1e-2]},
        "sequence_length": {"fixed": bench.sequence_length},
        "batch_size": {"fixed": bench.batch_size},
        "epochs": {"fixed": bench.epochs},
    }


def _foundation_space(bench) -> dict:
    # the foundation build has its own budget: the equal-epoch constraint
    # only binds across the four benchmark setups
    return {
        "n_recurrent_layers": {"fixed": bench.foundation_layers},
        "hidden_size": {"fixed": bench.foundation_hidden},
        "learning_rate": {"log_uniform": [2e-3, 8e-3]},
        "sequence_length": {"fixed": bench.sequence_length},
        "batch_size": {"fixed": bench.batch_size},
        "epochs": {"fixed": bench.foundation_epochs},
    }


def _run_sweep(sweep, target, setup, space, n_configs, seed, n_joints,
               train_set, val_set, data_hash, parent=None, folds=2):
    """Train one model per issued config; returns (SetupResult, best_doc)."""
    result = SetupResult(setup=setup, seed=seed)
    round_id = sweep.open_round(target=target, setup=setup, search_space=space,
                                configs_per_round=n_configs, seed=seed)
    while True:
        issued = sweep.request_config(round_id, f"bench-agent-s{seed}")
        if issued is None:
            break
        config_id, hp = issued
        provenance = Provenance(data_hash=data_hash)
        started = time.perf_counter()
        if parent is None:
            outcome = train(init_model(hp, n_joints), train_set, hp, folds=folds,
                            val_dataset=val_set, provenance=provenance)
        else:
            outcome = finetune(parent, train_set, hp, folds=folds,
                               val_dataset=val_set, provenance=provenance)
        elapsed = time.perf_counter() - started
        doc = outcome.checkpoint.to_json_dict()
        doc["content_hash"] = outcome.checkpoint.refresh_id()
        sweep.report_result(round_id, config_id, doc,
                            outcome.cross_validation_loss)
        result.run_wall_times.append(elapsed)
        result.run_cv_losses.append(outcome.cross_validation_loss)
        result.run_val_maes.append(outcome.checkpoint.validation_mae)
        result.epoch_traces.append(outcome.epoch_validation_mae)
        frozen = 0
        if parent is not None:
            frozen = _count_identical_groups(outcome.checkpoint.weights,
                                             parent.weights)
        result.frozen_groups_per_run.append(frozen)
    sweep.close_round(round_id)
    best_doc = sweep.best_checkpoint_doc(target)
    return result, best_doc


def _constant_predictor_mae(eval_set) -> float:
    targets = np.concatenate([t for _, t in eval_set], axis=0)
    return float(np.abs(targets - targets.mean(axis=0)).mean())


def run_benchmark(config: PipelineConfig) -> dict:
    bench = config.benchmark
    store = open_store_client(config.store_endpoint)
    sweep = open_sweep_client(config.sweep_endpoint)
    model = load_robot_model(config.robot_model)
    try:
        ensure_store_setup(config, store)
        target_site = config.site(bench.target_site)
        foundation_sites = [s for s in config.sites if s.site != target_site.site]
        if not foundation_sites:
            raise PipelineError("benchmark needs at least two sites: foundation "
                                "sources plus the target")
        foundation_instances = frozenset(s.instance_id for s in foundation_sites)
        target_instance = frozenset([target_site.instance_id])

        def fetch(purpose, instances):
            records = store.query(DatasetQuery(purpose=purpose,
                                               instance_ids=instances))
            return records

        foundation_train = fetch("train", foundation_instances)
        foundation_val = fetch("validation", foundation_instances)
        foundation_eval = fetch("evaluation", foundation_instances)
        target_train = fetch("train", target_instance)
        target_val = fetch("validation", target_instance)
        if len({r.instance_id for r in foundation_train}) < 2:
            raise PipelineError("benchmark needs training data from at least "
                                "two foundation instances")
        if not target_train or not target_val:
            raise PipelineError(
                f"benchmark needs train+validation data for target site "
                f"{target_site.site!r}")

        f_train = sequences_from_records(foundation_train)
        f_val = sequences_from_records(foundation_val) or None
        f_eval = sequences_from_records(foundation_eval) or None
        t_train = sequences_from_records(target_train)
        t_val = sequences_from_records(target_val)
        f_hash = dataset_content_hash(foundation_train)
        t_hash = dataset_content_hash(target_train)

        results = []
        foundation_summary = {}
        # one foundation serves every benchmark seed (it is the shared
        # cross-instance model; per-seed variation lives in the sweeps)
        foundation_target = "bench-foundation"
        try:
            foundation_doc = sweep.best_checkpoint_doc(foundation_target)
        except Exception:
            _, foundation_doc = _run_sweep(
                sweep, foundation_target, "end_to_end",
                _foundation_space(bench), bench.foundation_configs,
                bench.seeds[0], model.n_joints, f_train, f_val, f_hash,
                folds=bench.folds)
        foundation = _checkpoint_from_doc(foundation_doc)
        n_groups = len(foundation.weights)

        if f_eval is not None:
            from ..learner import evaluate

            report = evaluate(foundation, f_eval, model.tau_max)
            foundation_summary = {
                "evaluation_mae": report.mae,
                "per_joint_mae": report.per_joint_mae,
                "theoretical_max_mae": report.theoretical_max_mae,
                "sensor_floor": report.sensor_floor,
                "constant_predictor_mae": _constant_predictor_mae(f_eval),
            }

        for seed in bench.seeds:

            # A: end-to-end on the target instance
            result_a, _ = _run_sweep(
                sweep, f"bench-s{seed}-end_to_end", "end_to_end",
                _end_to_end_space(bench), bench.configs_per_round, seed,
                model.n_joints, t_train, t_val, t_hash, folds=bench.folds)
            results.append(result_a)

            # B: fine-tune the foundation
            result_b, best_b_doc = _run_sweep(
                sweep, f"bench-s{seed}-finetune_foundation", "finetune_foundation",
                _finetune_space(foundation.hyperparams, bench, n_groups),
                bench.configs_per_round, seed, model.n_joints, t_train, t_val,
                t_hash, parent=foundation, folds=bench.folds)
            results.append(result_b)

            # the instance model is built on first need: setup B's best
            instance_model = _checkpoint_from_doc(best_b_doc)

            # C: known hyperparameters, single run
            known_hp = instance_model.hyperparams
            space_c = {name: {"fixed": getattr(known_hp, name)}
                       for name in ("n_recurrent_layers", "hidden_size",
                                    "learning_rate", "sequence_length",
                                    "batch_size", "epochs", "unfrozen_layers")}
            result_c, _ = _run_sweep(
                sweep, f"bench-s{seed}-finetune_instance_known_hp",
                "finetune_instance_known_hp", space_c, 1, seed, model.n_joints,
                t_train, t_val, t_hash, parent=instance_model, folds=bench.folds)
            results.append(result_c)

            # D: unknown hyperparameters, sweep
            result_d, _ = _run_sweep(
                sweep, f"bench-s{seed}-finetune_instance_unknown_hp",
                "finetune_instance_unknown_hp",
                _finetune_space(instance_model.hyperparams, bench, n_groups),
                bench.configs_per_round, seed, model.n_joints, t_train, t_val,
                t_hash, parent=instance_model, folds=bench.folds)
            results.append(result_d)

        t_eval_targets = t_val  # outer axis scale for the trend figure
        outer_scale = theoretical_max_mae(t_eval_targets, model.tau_max)
        report_dir = Path(config.report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        paths = render_reports(results, outer_scale, report_dir)
        summary = {
            "results": [r.to_json_dict() for r in results],
            "foundation": foundation_summary,
            "theoretical_max_mae": outer_scale,
            "instance_model_note": "instance models are built on first need as "
                                   "setup finetune_foundation's best checkpoint",
            "setup_definitions": {
                "end_to_end": "random init, all layer groups trainable, "
                              "configs_per_round runs",
                "finetune_foundation": "start from foundation best, sweep over "
                                       "fine-tune hyperparameters",
                "finetune_instance_known_hp": "start from instance model, reuse "
                                              "its stored hyperparameters, 1 run",
                "finetune_instance_unknown_hp": "start from instance model, sweep",
            },
            "paths": {k: str(v) for k, v in paths.items()},
        }
        summary_path = report_dir / "benchmark_summary.json"
        summary_path.write_text(json.dumps(summary, indent=2))
        summary["paths"]["summary"] = str(summary_path)
        return summary
    finally:
        store.close()
        sweep.close()
