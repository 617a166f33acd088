"""Pipeline conductor: site data generation, the nightly training loop,
and coverage-directed collection.

The nightly loop runs three strictly sequential steps:

1. resolve the trajectory views, compute dataset statistics, persist them;
2. open a sweep round and train one model per issued configuration;
3. gate each result through the model repository; accepted checkpoints are
   evaluated on the evaluation view and the report stored beside them.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import RobotModel, apply_perturbation, load_robot_model
from ..learner import (
    HyperParams,
    ModelCheckpoint,
    Provenance,
    evaluate,
    init_model,
    load_checkpoint,
    sequences_from_records,
    train,
)
from ..store import DatasetQuery, ShadowView, dataset_content_hash, make_record
from ..trajectory import (
    EVALUATION_SCALING,
    NoiseModel,
    ProfileParams,
    iso_path,
    label_with_dynamics,
    sample_random_motion,
)
from .clients import EndpointError, open_store_client, open_sweep_client
from .config import PipelineConfig, SiteConfig

TRAIN_VIEW_ID = "trajectories-train"
VALIDATION_VIEW_ID = "trajectories-validation"
EVALUATION_VIEW_ID = "trajectories-evaluation"
_FULL_PROJECTION = ("record_id", "instance_id", "site", "purpose", "dt",
                    "q", "qd", "qdd", "tau")


class PipelineError(Exception):
    pass


@dataclass
class SiteRunResult:
    site: str
    record_ids: list = field(default_factory=list)
    errors: list = field(default_factory=list)


def _site_model(config: PipelineConfig, site: SiteConfig) -> tuple[RobotModel, RobotModel]:
    base = load_robot_model(config.robot_model)
    return base, apply_perturbation(base, site.make_perturbation())


_PURPOSE_INDEX = {"train": 0, "validation": 1, "evaluation": 2}


def _trajectory_seed(config: PipelineConfig, site: SiteConfig, purpose: str,
                     index: int) -> int:
    # process-independent derivation (unlike hash(), which is salted)
    seq = np.random.SeedSequence(
        [config.seed, site.seed, _PURPOSE_INDEX[purpose], index])
    return int(seq.generate_state(1)[0])


def run_site(config: PipelineConfig, site_name: str, store=None) -> SiteRunResult:
    """Generate, label, and ingest the site's configured record mix."""
    site = config.site(site_name)
    base, model = _site_model(config, site)
    own_store = store is None
    if own_store:
        store = open_store_client(config.store_endpoint)
    ensure_store_setup(config, store)
    result = SiteRunResult(site=site_name)
    rng = np.random.default_rng([config.seed, site.seed])
    try:
        for purpose in ("train", "validation", "evaluation"):
            for index in range(site.counts.get(purpose, 0)):
                try:
                    record = _generate_record(config, site, base, model, purpose,
                                              index, rng)
                    result.record_ids.append(store.ingest(record))
                except Exception as exc:
                    result.errors.append({"purpose": purpose, "index": index,
                                          "error": str(exc)})
    finally:
        if own_store:
            store.close()
    if result.errors:
        raise PipelineError(
            f"site {site_name}: {len(result.errors)} record(s) failed: "
            f"{result.errors}")
    return result


def _generate_record(config, site, base_model, instance_model, purpose, index, rng):
    seed = _trajectory_seed(config, site, purpose, index)
    if purpose == "evaluation":
        velocity = acceleration = EVALUATION_SCALING
        params = ProfileParams(velocity_scaling=velocity,
                               acceleration_scaling=acceleration,
                               sample_dt=site.sample_dt, rng_seed=seed)
        traj = iso_path(instance_model, params)
        noise = NoiseModel(torque_noise_sigma=0.0)  # clean evaluation targets
    else:
        velocity = float(rng.uniform(*site.velocity_scaling_range))
        acceleration = float(rng.uniform(*site.acceleration_scaling_range))
        params = ProfileParams(
            velocity_scaling=velocity, acceleration_scaling=acceleration,
            sample_dt=site.sample_dt, n_waypoints=site.n_waypoints, rng_seed=seed,
            waypoint_q_min=site.waypoint_q_min, waypoint_q_max=site.waypoint_q_max)
        traj = sample_random_motion(instance_model, params)
        noise = NoiseModel(torque_noise_sigma=config.torque_noise_sigma,
                           rng_seed=seed + 1)
    tau = label_with_dynamics(instance_model, traj, noise)
    return make_record(
        robot_type=base_model.name, instance_id=site.instance_id, site=site.site,
        purpose=purpose, velocity_scaling=velocity,
        acceleration_scaling=acceleration,
        software_commit=config.software_commit, traj=traj, tau=tau)


def ensure_store_setup(config: PipelineConfig, store) -> None:
    """Robot limits + the three standing views (idempotent).

    Socket store endpoints cannot be configured remotely; their operator
    runs ``d2k store init`` on the store host instead.
    """
    model = load_robot_model(config.robot_model)
    try:
        store.ensure_robot_limits(model.name, model.q_min, model.q_max)
    except EndpointError:
        pass
    for view_id, purpose in ((TRAIN_VIEW_ID, "train"),
                             (VALIDATION_VIEW_ID, "validation"),
                             (EVALUATION_VIEW_ID, "evaluation")):
        view = ShadowView(query=DatasetQuery(purpose=purpose),
                          projection=_FULL_PROJECTION,
                          description=f"all {purpose} trajectories",
                          view_id=view_id)
        try:
            store.create_view(view)
        except Exception:
            pass  # already present


def _records_for_view(store, purpose: str, instance_ids=None):
    query = DatasetQuery(purpose=purpose, instance_ids=instance_ids)
    return store.query(query)


def run_nightly(config: PipelineConfig, once: bool = True) -> dict:
    """One nightly pass; ``once`` is the tested mode (the scheduler simply
    sleeps until the configured time and then calls this)."""
    if not once:
        raise PipelineError("the scheduling daemon lives in the CLI; call "
                            "run_nightly(once=True)")
    store = open_store_client(config.store_endpoint)
    sweep = open_sweep_client(config.sweep_endpoint)
    report: dict = {"steps": []}
    started = time.time()
    try:
        # step 1: pull the standing views, then statistics
        ensure_store_setup(config, store)
        view_counts = {view_id: len(store.resolve_view(view_id))
                       for view_id in (TRAIN_VIEW_ID, VALIDATION_VIEW_ID,
                                       EVALUATION_VIEW_ID)}
        train_records = _records_for_view(store, "train")
        validation_records = _records_for_view(store, "validation")
        evaluation_records = _records_for_view(store, "evaluation")
        stats = store.stats(DatasetQuery())
        report_dir = Path(config.report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        stats_path = report_dir / f"nightly_stats_{int(started)}.json"
        stats_path.write_text(json.dumps(stats, indent=2))
        report["steps"].append({
            "step": "statistics",
            "stats_path": str(stats_path),
            "view_counts": view_counts,
            "train_records": len(train_records),
            "validation_records": len(validation_records),
            "evaluation_records": len(evaluation_records),
        })
        if not train_records:
            raise PipelineError("empty training view; aborting before training")

        # step 2: sweep round with local agents
        model = load_robot_model(config.robot_model)
        train_set = sequences_from_records(train_records)
        val_set = sequences_from_records(validation_records) or None
        eval_set = sequences_from_records(evaluation_records) or None
        data_hash = dataset_content_hash(train_records)
        round_id = sweep.open_round(
            target="foundation", setup="end_to_end",
            search_space=config.nightly.search_space(),
            configs_per_round=config.nightly.configs_per_round,
            seed=config.seed)

        def post_accept(target, checkpoint_id, checkpoint_doc):
            if eval_set is None:
                return None
            ckpt = _checkpoint_from_doc(checkpoint_doc)
            return evaluate(ckpt, eval_set, model.tau_max).to_json_dict()

        decisions = []
        while True:
            issued = sweep.request_config(round_id, "nightly-agent")
            if issued is None:
                break
            config_id, hp = issued
            ckpt0 = init_model(hp, model.n_joints)
            outcome = train(ckpt0, train_set, hp, folds=config.nightly.folds,
                            val_dataset=val_set,
                            provenance=Provenance(view_id=TRAIN_VIEW_ID,
                                                  data_hash=data_hash))
            doc = outcome.checkpoint.to_json_dict()
            doc["content_hash"] = outcome.checkpoint.refresh_id()
            accepted = sweep.report_result(round_id, config_id, doc,
                                           outcome.cross_validation_loss,
                                           post_accept=post_accept)
            decisions.append({"config_id": config_id,
                              "cross_validation_loss": outcome.cross_validation_loss,
                              "validation_mae": outcome.checkpoint.validation_mae,
                              "accepted": accepted})
        accounting = sweep.close_round(round_id)
        report["steps"].append({"step": "sweep", "round_id": round_id,
                                "configs_trained": len(decisions),
                                "accounting": accounting})

        # step 3: gate outcome summary
        best_id, best_loss = sweep.best("foundation")
        report["steps"].append({"step": "gate", "decisions": decisions,
                                "best_id": best_id, "best_loss": best_loss})
        report["ok"] = True
    finally:
        report["wall_time_s"] = time.time() - started
        store.close()
        sweep.close()
    run_path = Path(config.report_dir) / f"nightly_run_{int(started)}.json"
    run_path.write_text(json.dumps(report, indent=2))
    report["report_path"] = str(run_path)
    return report


def _checkpoint_from_doc(doc: dict) -> ModelCheckpoint:
    from ..learner.checkpoint import Normalization
    from ..learner.network import LearnerError  # noqa: F401

    weights = [{k: np.asarray(v, dtype=float) for k, v in group.items()}
               for group in doc["weights"]]
    return ModelCheckpoint(
        weights=weights,
        normalization=Normalization(**doc["normalization"]),
        hyperparams=HyperParams.from_json_dict(doc["hyperparams"]),
        provenance=Provenance(**(doc.get("provenance") or {})),
        validation_mae=doc.get("validation_mae"),
        checkpoint_id=doc.get("content_hash"),
    )


# --- coverage-directed collection -------------------------------------------------


@dataclass(frozen=True)
class CoverageDirective:
    joint_index: int
    interval: tuple
    requested_trajectories: int
    site: str


def k2d_directives(config: PipelineConfig, store=None,
                   query: DatasetQuery | None = None) -> list[CoverageDirective]:
    """One directive per under-covered (joint, bin).

    A bin is under-covered when its count falls below threshold * mean
    occupancy for that joint's histogram.
    """
    own_store = store is None
    if own_store:
        store = open_store_client(config.store_endpoint)
    try:
        model = load_robot_model(config.robot_model)
        ensure_store_setup(config, store)
        query = query or DatasetQuery(purpose="train")
        n_bins = config.k2d.n_bins
        directives = []
        sites = [s.site for s in config.sites]
        total_all = 0
        for joint in range(model.n_joints):
            edges, counts = store.histogram(query, joint, n_bins)
            total = sum(counts)
            total_all += total
            if total == 0:
                continue
            mean = total / n_bins
            for b, count in enumerate(counts):
                if count < config.k2d.threshold * mean:
                    directives.append(CoverageDirective(
                        joint_index=joint,
                        interval=(float(edges[b]), float(edges[b + 1])),
                        requested_trajectories=config.k2d.trajectories_per_directive,
                        site=sites[len(directives) % len(sites)],
                    ))
        if total_all == 0:
            raise PipelineError("degenerate histogram: no samples in match")
        return directives
    finally:
        if own_store:
            store.close()


def apply_directive(config: PipelineConfig, directive: CoverageDirective,
                    store=None) -> list[str]:
    """Collect trajectories whose waypoints for the target joint stay inside
    the directive interval, label them, and ingest them as training data."""
    site = config.site(directive.site)
    base, model = _site_model(config, site)
    lo, hi = directive.interval
    margin = 1e-9 * (hi - lo)
    waypoint_lo = model.q_min.copy()
    waypoint_hi = model.q_max.copy()
    if site.waypoint_q_min is not None:
        waypoint_lo = np.maximum(waypoint_lo, site.waypoint_q_min)
    if site.waypoint_q_max is not None:
        waypoint_hi = np.minimum(waypoint_hi, site.waypoint_q_max)
    waypoint_lo[directive.joint_index] = lo + margin
    waypoint_hi[directive.joint_index] = hi - margin

    own_store = store is None
    if own_store:
        store = open_store_client(config.store_endpoint)
    ids = []
    try:
        rng = np.random.default_rng([config.seed, site.seed, directive.joint_index])
        for index in range(directive.requested_trajectories):
            seed = int(rng.integers(2**31)) + index
            velocity = float(rng.uniform(*site.velocity_scaling_range))
            acceleration = float(rng.uniform(*site.acceleration_scaling_range))
            params = ProfileParams(
                velocity_scaling=velocity, acceleration_scaling=acceleration,
                sample_dt=site.sample_dt, n_waypoints=site.n_waypoints,
                rng_seed=seed, waypoint_q_min=waypoint_lo, waypoint_q_max=waypoint_hi)
            traj = sample_random_motion(model, params)
            noise = NoiseModel(torque_noise_sigma=config.torque_noise_sigma,
                               rng_seed=seed + 1)
            tau = label_with_dynamics(model, traj, noise)
            record = make_record(
                robot_type=base.name, instance_id=site.instance_id, site=site.site,
                purpose="train", velocity_scaling=velocity,
                acceleration_scaling=acceleration,
                software_commit=config.software_commit, traj=traj, tau=tau)
            ids.append(store.ingest(record))
    finally:
        if own_store:
            store.close()
    return ids
