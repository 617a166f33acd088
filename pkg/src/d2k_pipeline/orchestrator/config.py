"""Pipeline configuration file handling.

The config file is YAML mirroring the field names below.  Endpoints select
the transport: ``dir:<path>`` opens the store/repository in-process,
``tcp:<host>:<port>`` speaks the length-delimited socket protocols, and
``http://host:port`` talks to the HTTP service.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..dynamics import InstancePerturbation

CONFIG_ENV_VAR = "D2K_CONFIG"
STORE_DIR_ENV_VAR = "D2K_STORE_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class SiteConfig:
    site: str
    instance_id: str
    seed: int = 0
    counts: dict = field(default_factory=lambda: {"train": 20, "validation": 4,
                                                  "evaluation": 1})
    velocity_scaling_range: tuple = (0.2, 0.8)
    acceleration_scaling_range: tuple = (0.2, 0.8)
    n_waypoints: int = 4
    sample_dt: float = 0.02
    perturbation: dict = field(default_factory=dict)
    waypoint_q_min: list | None = None
    waypoint_q_max: list | None = None

    def __post_init__(self):
        for name in ("velocity_scaling_range", "acceleration_scaling_range"):
            rng = tuple(getattr(self, name))
            if not (0 < rng[0] <= rng[1] <= 1):
                raise ConfigError(f"site {self.site}: {name} must satisfy "
                                  f"0 < lo <= hi <= 1")
            setattr(self, name, rng)
        for purpose, count in self.counts.items():
            if purpose not in ("train", "validation", "evaluation"):
                raise ConfigError(f"site {self.site}: unknown purpose {purpose!r}")
            if count < 0:
                raise ConfigError(f"site {self.site}: negative count for {purpose}")

    def make_perturbation(self) -> InstancePerturbation:
        doc = dict(self.perturbation)
        return InstancePerturbation(
            instance_id=self.instance_id,
            mass_scale=doc.get("mass_scale", 1.0),
            payload_mass=doc.get("payload_mass", 0.0),
            payload_offset=np.asarray(doc.get("payload_offset", [0.0, 0.0, 0.0]),
                                      dtype=float),
            friction_scale=doc.get("friction_scale", 1.0),
        )


@dataclass
class NightlyConfig:
    configs_per_round: int = 10
    epochs: int = 12
    folds: int = 2
    sequence_length: int = 24
    batch_size: int = 16
    hidden_sizes: list = field(default_factory=lambda: [16, 32])
    layer_range: tuple = (1, 2)
    learning_rate_range: tuple = (1e-3, 1e-2)

    def search_space(self) -> dict:
        return {
            "n_recurrent_layers": {"int_range": list(self.layer_range)},
            "hidden_size": {"choice": list(self.hidden_sizes)},
            "learning_rate": {"log_uniform": list(self.learning_rate_range)},
            "sequence_length": {"fixed": self.sequence_length},
            "batch_size": {"fixed": self.batch_size},
            "epochs": {"fixed": self.epochs},
        }


@dataclass
class BenchmarkConfig:
    target_site: str | None = None      # default: last configured site
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    # desk-scale budgets; the nightly loop keeps ten configs per round
    configs_per_round: int = 6
    foundation_configs: int = 3
    epochs: int = 6
    foundation_epochs: int = 40
    folds: int = 2
    sequence_length: int = 24
    batch_size: int = 16
    foundation_hidden: int = 32
    foundation_layers: int = 1
    max_unfrozen: int = 2


@dataclass
class K2DConfig:
    n_bins: int = 20
    threshold: float = 0.5
    trajectories_per_directive: int = 3


@dataclass
class PipelineConfig:
    robot_model: str
    store_endpoint: str
    sweep_endpoint: str
    report_dir: str
    sites: list
    schedule: str = "02:00"
    seed: int = 0
    software_commit: str = "unversioned"
    torque_noise_sigma: float = 0.05
    nightly: NightlyConfig = field(default_factory=NightlyConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    k2d: K2DConfig = field(default_factory=K2DConfig)

    def __post_init__(self):
        if not self.sites:
            raise ConfigError("at least one site must be configured")
        names = [s.site for s in self.sites]
        if len(set(names)) != len(names):
            raise ConfigError("site names must be unique")
        if self.benchmark.target_site is None:
            self.benchmark.target_site = self.sites[-1].site
        if not _valid_schedule(self.schedule):
            raise ConfigError(f"schedule {self.schedule!r} is not HH:MM")

    def site(self, name: str) -> SiteConfig:
        for site in self.sites:
            if site.site == name:
                return site
        raise ConfigError(f"unknown site {name!r}")


def _valid_schedule(value: str) -> bool:
    parts = value.split(":")
    if len(parts) != 2:
        return False
    try:
        hour, minute = int(parts[0]), int(parts[1])
    except ValueError:
        return False
    return 0 <= hour < 24 and 0 <= minute < 60


def _build(section_cls, doc, context):
    try:
        return section_cls(**doc)
    except TypeError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def load_pipeline_config(path: str | os.PathLike) -> PipelineConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    for required in ("robot_model", "store_endpoint", "sweep_endpoint",
                     "report_dir", "sites"):
        if required not in doc:
            raise ConfigError(f"{path}: missing required field {required!r}")
    sites = [_build(SiteConfig, s, f"{path} sites[{i}]")
             for i, s in enumerate(doc["sites"])]
    kwargs = {k: v for k, v in doc.items()
              if k not in ("sites", "nightly", "benchmark", "k2d")}
    # model paths are relative to the config file
    model_path = Path(kwargs["robot_model"])
    if not model_path.is_absolute():
        kwargs["robot_model"] = str((path.parent / model_path).resolve())
    config = _build(PipelineConfig, {
        **kwargs,
        "sites": sites,
        "nightly": _build(NightlyConfig, doc.get("nightly", {}), f"{path} nightly"),
        "benchmark": _build(BenchmarkConfig, doc.get("benchmark", {}),
                            f"{path} benchmark"),
        "k2d": _build(K2DConfig, doc.get("k2d", {}), f"{path} k2d"),
    }, str(path))
    return config


def resolve_config_path(explicit: str | None) -> str:
    if explicit:
        return explicit
    env = os.environ.get(CONFIG_ENV_VAR)
    if env:
        return env
    raise ConfigError(f"no config file given and {CONFIG_ENV_VAR} is unset")
