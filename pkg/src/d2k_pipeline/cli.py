"""Command-line interface.

``d2k`` is the umbrella command; ``sweep`` is an alias for ``d2k sweep``.
Store subcommands operate on ``--store-dir`` (or ``D2K_STORE_DIR``) or on a
running service via ``--url``; pipeline subcommands read the YAML config
given by ``--config`` (or ``D2K_CONFIG``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .dynamics import apply_perturbation, load_robot_model
from .orchestrator.config import (
    STORE_DIR_ENV_VAR,
    ConfigError,
    load_pipeline_config,
    resolve_config_path,
)
from .store import DatasetQuery, ShadowView, canonical_line
from .store.records import TrajectoryRecord
from .trajectory import (
    EVALUATION_SCALING,
    NoiseModel,
    ProfileParams,
    iso_path,
    label_with_dynamics,
    sample_random_motion,
)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _store_client(args):
    from .orchestrator.clients import open_store_client

    if getattr(args, "url", None):
        return open_store_client(args.url)
    store_dir = getattr(args, "store_dir", None) or os.environ.get(STORE_DIR_ENV_VAR)
    if not store_dir:
        raise ConfigError(f"give --store-dir, --url, or set {STORE_DIR_ENV_VAR}")
    return open_store_client(f"dir:{store_dir}")


def _query_from_args(args) -> DatasetQuery:
    return DatasetQuery(
        robot_type=args.robot_type,
        instance_ids=set(args.instance_id) if args.instance_id else None,
        sites=set(args.site) if args.site else None,
        purpose=args.purpose,
        velocity_scaling_range=(tuple(args.velocity_scaling_range)
                                if args.velocity_scaling_range else None),
        limit=args.limit,
    )


def _add_query_flags(parser):
    parser.add_argument("--robot-type")
    parser.add_argument("--instance-id", action="append")
    parser.add_argument("--site", action="append")
    parser.add_argument("--purpose", choices=["train", "validation", "evaluation"])
    parser.add_argument("--velocity-scaling-range", nargs=2, type=float,
                        metavar=("LO", "HI"))
    parser.add_argument("--limit", type=int)


def _add_store_flags(parser):
    parser.add_argument("--store-dir", help=f"store directory "
                        f"(or {STORE_DIR_ENV_VAR})")
    parser.add_argument("--url", help="HTTP service base URL instead of a "
                        "local directory")


# --- generate ---------------------------------------------------------------


def cmd_generate(args) -> int:
    model = load_robot_model(args.model)
    if args.instance_perturbation:
        doc = json.loads(args.instance_perturbation)
        from .dynamics import InstancePerturbation

        model_used = apply_perturbation(model, InstancePerturbation(
            instance_id=args.instance_id, **doc))
    else:
        model_used = model
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    count = args.count
    written = 0
    with open(out, "w", encoding="utf-8") as fh:
        for index in range(count):
            seed = args.seed + index
            if args.purpose == "evaluation":
                params = ProfileParams(
                    velocity_scaling=EVALUATION_SCALING,
                    acceleration_scaling=EVALUATION_SCALING,
                    sample_dt=args.sample_dt, rng_seed=seed)
                traj = iso_path(model_used, params)
                noise = NoiseModel(torque_noise_sigma=0.0)
            else:
                params = ProfileParams(
                    velocity_scaling=args.velocity_scaling,
                    acceleration_scaling=args.acceleration_scaling,
                    sample_dt=args.sample_dt, n_waypoints=args.n_waypoints,
                    rng_seed=seed)
                traj = sample_random_motion(model_used, params)
                noise = NoiseModel(torque_noise_sigma=args.noise_sigma,
                                   rng_seed=seed + 1)
            tau = label_with_dynamics(model_used, traj, noise)
            record = TrajectoryRecord(
                robot_type=model.name, instance_id=args.instance_id,
                site=args.site, purpose=args.purpose,
                velocity_scaling=params.velocity_scaling,
                acceleration_scaling=params.acceleration_scaling,
                software_commit=args.software_commit, dt=traj.dt,
                q=traj.q, qd=traj.qd, qdd=traj.qdd, tau=tau)
            record.assign_identity()
            fh.write(canonical_line(record) + "\n")
            written += 1
    print(f"wrote {written} record(s) to {out}")
    return 0


# --- store ------------------------------------------------------------------


def cmd_store_init(args) -> int:
    model = load_robot_model(args.model)
    client = _store_client(args)
    client.ensure_robot_limits(model.name, model.q_min, model.q_max)
    print(f"store configured for robot type {model.name!r}")
    return 0


def cmd_store_ingest(args) -> int:
    client = _store_client(args)
    ingested = []
    with open(args.file, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = TrajectoryRecord.from_json_dict(json.loads(line))
            ingested.append(client.ingest(record))
    for record_id in ingested:
        print(record_id)
    return 0


def cmd_store_query(args) -> int:
    client = _store_client(args)
    for record in client.query(_query_from_args(args)):
        print(canonical_line(record))
    return 0


def cmd_store_stats(args) -> int:
    client = _store_client(args)
    stats = client.stats(_query_from_args(args))
    if hasattr(stats, "to_json_dict"):
        stats = stats.to_json_dict()
    print(json.dumps(stats, indent=2))
    return 0


def cmd_store_histogram(args) -> int:
    client = _store_client(args)
    edges, counts = client.histogram(_query_from_args(args), args.joint_index,
                                     args.n_bins)
    edges = list(edges) if not isinstance(edges, list) else edges
    counts = list(counts) if not isinstance(counts, list) else counts
    print(json.dumps({"joint_index": args.joint_index,
                      "bin_edges": edges, "counts": counts}, indent=2))
    return 0


def cmd_store_create_view(args) -> int:
    client = _store_client(args)
    view = ShadowView(query=_query_from_args(args),
                      projection=tuple(args.projection.split(",")),
                      description=args.description, view_id=args.view_id)
    print(client.create_view(view))
    return 0


def cmd_store_resolve_view(args) -> int:
    client = _store_client(args)
    print(json.dumps(client.resolve_view(args.view_id), indent=2))
    return 0


# --- sweep ------------------------------------------------------------------


def cmd_sweep_serve(args) -> int:
    from .sweep import SweepCoordinator, SweepServer

    coordinator = SweepCoordinator(args.repo_dir)
    server = SweepServer(coordinator, host=args.host, port=args.port)
    host, port = server.address
    print(f"sweep server listening on tcp:{host}:{port} "
          f"(repo: {args.repo_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_sweep_status(args) -> int:
    if args.url:
        from .orchestrator.clients import HttpSweepClient

        client = HttpSweepClient(args.url)
        status = client.status()
        client.close()
    else:
        from .sweep import SweepCoordinator

        if not args.repo_dir:
            return _fail("give --repo-dir or --url")
        status = SweepCoordinator(args.repo_dir).status()
    print(json.dumps(status, indent=2))
    return 0


# --- service ------------------------------------------------------------------


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    app = create_app(store_dir=args.store_dir, repo_dir=args.repo_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- pipeline ------------------------------------------------------------------


def _load_config(args):
    return load_pipeline_config(resolve_config_path(args.config))


def cmd_site_run(args) -> int:
    from .orchestrator import run_site

    config = _load_config(args)
    if args.seed is not None:
        config.seed = args.seed
    sites = [s.site for s in config.sites] if args.all else [args.site]
    if sites == [None]:
        return _fail("give --site NAME or --all")
    for site in sites:
        result = run_site(config, site)
        print(f"site {site}: ingested {len(result.record_ids)} record(s)")
    return 0


def cmd_nightly(args) -> int:
    from .orchestrator import run_nightly

    config = _load_config(args)
    if args.seed is not None:
        config.seed = args.seed
    if args.once:
        report = run_nightly(config, once=True)
        print(json.dumps(report, indent=2))
        return 0
    # thin scheduler: sleep until the configured HH:MM, run, repeat
    hour, minute = (int(part) for part in config.schedule.split(":"))
    print(f"nightly daemon: waiting for {config.schedule} every day "
          f"(ctrl-c to stop)")
    while True:
        now = datetime.now()
        target = now.replace(hour=hour, minute=minute, second=0, microsecond=0)
        if target <= now:
            target += timedelta(days=1)
        time.sleep((target - now).total_seconds())
        report = run_nightly(config, once=True)
        print(json.dumps(report, indent=2))
    return 0


def cmd_k2d_scan(args) -> int:
    from .orchestrator import k2d_directives

    config = _load_config(args)
    directives = k2d_directives(config)
    print(json.dumps([{
        "joint_index": d.joint_index, "interval": list(d.interval),
        "requested_trajectories": d.requested_trajectories, "site": d.site,
    } for d in directives], indent=2))
    return 0


def cmd_k2d_apply(args) -> int:
    from .orchestrator import apply_directive, k2d_directives

    config = _load_config(args)
    directives = k2d_directives(config)
    total = 0
    for directive in directives:
        ids = apply_directive(config, directive)
        total += len(ids)
        print(f"joint {directive.joint_index} "
              f"[{directive.interval[0]:.3f}, {directive.interval[1]:.3f}] "
              f"@ {directive.site}: ingested {len(ids)}")
    print(f"applied {len(directives)} directive(s), {total} record(s)")
    return 0


def cmd_bench(args) -> int:
    from .orchestrator import run_benchmark

    config = _load_config(args)
    if args.seed is not None:
        config.benchmark.seeds = [args.seed]
    summary = run_benchmark(config)
    for result in summary["results"]:
        print(f"{result['setup']:34s} seed={result['seed']} "
              f"total={result['total_wall_time']:.1f}s "
              f"best_val_mae={result['best_val_mae']:.4f}")
    print(f"reports: {summary['paths']}")
    return 0


def cmd_report(args) -> int:
    from .orchestrator.reports import render_mae_trends, render_runtime_boxplot

    report_dir = Path(args.report_dir)
    runtime_csv = report_dir / "runtime.csv"
    mae_csv = report_dir / "mae_trace.csv"
    if not runtime_csv.exists() or not mae_csv.exists():
        return _fail(f"no benchmark CSVs in {report_dir}")
    outer = args.theoretical_max
    if outer is None:
        summary = report_dir / "benchmark_summary.json"
        if not summary.exists():
            return _fail("give --theoretical-max or keep benchmark_summary.json")
        outer = json.loads(summary.read_text())["theoretical_max_mae"]
    (report_dir / "runtime_boxplot.svg").write_text(
        render_runtime_boxplot(runtime_csv.read_text()))
    (report_dir / "validation_mae_trends.svg").write_text(
        render_mae_trends(mae_csv.read_text(), outer))
    print(f"re-rendered SVGs in {report_dir}")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="d2k", description="multi-site robot dynamics data pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate labeled trajectory records")
    p.add_argument("--model", required=True)
    p.add_argument("--instance-id", required=True)
    p.add_argument("--site", required=True)
    p.add_argument("--purpose", required=True,
                   choices=["train", "validation", "evaluation"])
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--velocity-scaling", type=float, default=0.5)
    p.add_argument("--acceleration-scaling", type=float, default=0.5)
    p.add_argument("--n-waypoints", type=int, default=5)
    p.add_argument("--sample-dt", type=float, default=0.01)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--software-commit", default="unversioned")
    p.add_argument("--instance-perturbation",
                   help="JSON perturbation (mass_scale, payload_mass, ...)")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_generate)

    store = sub.add_parser("store", help="trajectory store verbs")
    store_sub = store.add_subparsers(dest="store_command", required=True)
    specs = [
        ("init", cmd_store_init), ("ingest", cmd_store_ingest),
        ("query", cmd_store_query), ("stats", cmd_store_stats),
        ("histogram", cmd_store_histogram),
        ("create-view", cmd_store_create_view),
        ("resolve-view", cmd_store_resolve_view),
    ]
    for name, func in specs:
        p = store_sub.add_parser(name)
        _add_store_flags(p)
        if name == "init":
            p.add_argument("--model", required=True)
        if name == "ingest":
            p.add_argument("file")
        if name in ("query", "stats", "histogram", "create-view"):
            _add_query_flags(p)
        if name == "histogram":
            p.add_argument("--joint-index", type=int, required=True)
            p.add_argument("--n-bins", type=int, required=True)
        if name == "create-view":
            p.add_argument("--view-id")
            p.add_argument("--projection", required=True,
                           help="comma-separated field list")
            p.add_argument("--description", default="")
        if name == "resolve-view":
            p.add_argument("--view-id", required=True)
        p.set_defaults(func=func)

    sweep = sub.add_parser("sweep", help="sweep coordination")
    sweep_sub = sweep.add_subparsers(dest="sweep_command", required=True)
    p = sweep_sub.add_parser("serve")
    p.add_argument("--repo-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7863)
    p.set_defaults(func=cmd_sweep_serve)
    p = sweep_sub.add_parser("status")
    p.add_argument("--repo-dir")
    p.add_argument("--url")
    p.set_defaults(func=cmd_sweep_status)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--store-dir")
    p.add_argument("--repo-dir")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7862)
    p.set_defaults(func=cmd_serve)

    site = sub.add_parser("site", help="site data generation")
    site_sub = site.add_subparsers(dest="site_command", required=True)
    p = site_sub.add_parser("run")
    p.add_argument("--config")
    p.add_argument("--site")
    p.add_argument("--all", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_site_run)

    p = sub.add_parser("nightly", help="the nightly training loop")
    p.add_argument("--config")
    p.add_argument("--once", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_nightly)

    k2d = sub.add_parser("k2d", help="coverage-directed collection")
    k2d_sub = k2d.add_subparsers(dest="k2d_command", required=True)
    p = k2d_sub.add_parser("scan")
    p.add_argument("--config")
    p.set_defaults(func=cmd_k2d_scan)
    p = k2d_sub.add_parser("apply")
    p.add_argument("--config")
    p.set_defaults(func=cmd_k2d_apply)

    p = sub.add_parser("bench", help="the four-setup benchmark")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="re-render report SVGs from CSVs")
    p.add_argument("--report-dir", required=True)
    p.add_argument("--theoretical-max", type=float)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(str(exc))
    except KeyboardInterrupt:
        return 130


def sweep_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    return main(["sweep", *argv])


if __name__ == "__main__":
    sys.exit(main())
