"""Sweep coordination and the gated model repository.

The coordinator issues hyperparameter configurations for a round (uniform
random search, deterministic per round seed and issue index), collects
cross-validation losses, and updates the per-target best checkpoint only
on strict improvement.  Acceptance is durable before the caller sees the
ack: the checkpoint file and repository state hit disk (write + atomic
rename) inside the gate's critical section.

Targets are strings: ``foundation`` or ``instance:<id>``.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..learner import HyperParams

SETUPS = (
    "end_to_end",
    "finetune_foundation",
    "finetune_instance_known_hp",
    "finetune_instance_unknown_hp",
)
CONFIGS_PER_ROUND_DEFAULT = 10

_SAMPLER_KINDS = ("fixed", "choice", "int_range", "uniform", "log_uniform")


class SweepError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


def validate_search_space(space: dict) -> dict:
    known = set(HyperParams.__dataclass_fields__)
    for name, spec in space.items():
        if name not in known:
            raise SweepError("bad_space", f"unknown hyperparameter {name!r}")
        if not isinstance(spec, dict) or len(spec) != 1:
            raise SweepError("bad_space",
                             f"{name}: sampler must be a single-kind dict")
        kind, args = next(iter(spec.items()))
        if kind not in _SAMPLER_KINDS:
            raise SweepError("bad_space", f"{name}: unknown sampler kind {kind!r}")
        if kind in ("int_range", "uniform", "log_uniform"):
            lo, hi = args
            if lo > hi:
                raise SweepError("bad_space", f"{name}: empty range [{lo}, {hi}]")
        if kind == "choice" and not args:
            raise SweepError("bad_space", f"{name}: empty choice list")
    return space


def sample_config(space: dict, round_seed: int, issue_index: int) -> HyperParams:
    """Deterministic random-search draw for one issue slot.

    Fields are drawn in sorted name order; ``rng_seed`` is always the issue
    index so every configuration trains with its own reproducible stream.
    """
    rng = np.random.default_rng([round_seed, issue_index])
    values = {}
    for name in sorted(space):
        kind, args = next(iter(space[name].items()))
        if kind == "fixed":
            values[name] = args
        elif kind == "choice":
            values[name] = args[int(rng.integers(len(args)))]
        elif kind == "int_range":
            values[name] = int(rng.integers(args[0], args[1] + 1))
        elif kind == "uniform":
            values[name] = float(rng.uniform(args[0], args[1]))
        elif kind == "log_uniform":
            values[name] = float(np.exp(rng.uniform(np.log(args[0]), np.log(args[1]))))
    values["rng_seed"] = issue_index
    return HyperParams(**values)


@dataclass
class _Round:
    round_id: str
    target: str
    setup: str
    search_space: dict
    configs_per_round: int
    seed: int
    expire_after_s: float | None = None
    open: bool = True
    issued: dict = field(default_factory=dict)   # config_id -> issue doc

    def to_json_dict(self) -> dict:
        return {
            "round_id": self.round_id, "target": self.target, "setup": self.setup,
            "search_space": self.search_space,
            "configs_per_round": self.configs_per_round, "seed": self.seed,
            "expire_after_s": self.expire_after_s, "open": self.open,
            "issued": self.issued,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "_Round":
        return cls(**doc)


class SweepCoordinator:
    """Thread-safe gate and ledger; all verbs may be called concurrently."""

    def __init__(self, repo_dir: str | os.PathLike):
        self.repo_dir = Path(repo_dir)
        (self.repo_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._targets: dict = {}
        self._rounds: dict[str, _Round] = {}
        self._load()

    # --- persistence ---

    def _load(self) -> None:
        repo_path = self.repo_dir / "repository.json"
        if repo_path.exists():
            self._targets = json.loads(repo_path.read_text())
        rounds_path = self.repo_dir / "rounds.json"
        if rounds_path.exists():
            for doc in json.loads(rounds_path.read_text()):
                rnd = _Round.from_json_dict(doc)
                self._rounds[rnd.round_id] = rnd

    def _write_json(self, name: str, payload) -> None:
        tmp = self.repo_dir / f"{name}.tmp"
        tmp.write_text(json.dumps(payload))
        os.replace(tmp, self.repo_dir / name)

    def _persist_repository(self) -> None:
        self._write_json("repository.json", self._targets)

    def _persist_rounds(self) -> None:
        self._write_json("rounds.json", [r.to_json_dict() for r in self._rounds.values()])

    # --- verbs ---

    def open_round(self, target: str, setup: str, search_space: dict,
                   configs_per_round: int = CONFIGS_PER_ROUND_DEFAULT,
                   seed: int = 0, expire_after_s: float | None = None) -> str:
        if setup not in SETUPS:
            raise SweepError("bad_request", f"unknown setup {setup!r}")
        if configs_per_round < 1:
            raise SweepError("bad_request", "configs_per_round must be >= 1")
        validate_search_space(search_space)
        with self._lock:
            for rnd in self._rounds.values():
                if rnd.open and rnd.target == target:
                    raise SweepError(
                        "round_open",
                        f"round {rnd.round_id} is already open for target {target!r}")
            round_id = uuid.uuid4().hex[:12]
            self._rounds[round_id] = _Round(
                round_id=round_id, target=target, setup=setup,
                search_space=search_space, configs_per_round=configs_per_round,
                seed=seed, expire_after_s=expire_after_s)
            self._persist_rounds()
            self._targets.setdefault(
                target, {"best_id": None, "best_loss": None, "history": []})
            self._persist_repository()
            return round_id

    def _get_round(self, round_id: str) -> _Round:
        rnd = self._rounds.get(round_id)
        if rnd is None:
            raise SweepError("not_found", f"unknown round {round_id!r}")
        return rnd

    def _apply_expiry(self, rnd: _Round, now: float) -> None:
        if rnd.expire_after_s is None:
            return
        for doc in rnd.issued.values():
            if doc["status"] == "issued" and now - doc["issued_at"] > rnd.expire_after_s:
                doc["status"] = "expired"

    def request_config(self, round_id: str, agent_id: str):
        """(config_id, HyperParams) for the next slot, or None when the
        round has handed out all its configurations."""
        with self._lock:
            rnd = self._get_round(round_id)
            self._apply_expiry(rnd, time.time())
            if not rnd.open or len(rnd.issued) >= rnd.configs_per_round:
                return None
            index = len(rnd.issued)
            config_id = f"{round_id}#{index:03d}"
            params = sample_config(rnd.search_space, rnd.seed, index)
            rnd.issued[config_id] = {
                "config_id": config_id, "agent_id": agent_id, "index": index,
                "params": params.to_json_dict(), "status": "issued",
                "issued_at": time.time(),
            }
            # issue slots are not persisted until a report or close: after a
            # crash an unreported slot is simply reissued with the same
            # deterministic parameters
            return config_id, params

    def report_result(self, round_id: str, config_id: str, checkpoint_doc: dict,
                      loss: float, post_accept=None) -> bool:
        """Gate one result; True iff it strictly improved the target's best."""
        if not isinstance(loss, (int, float)) or not np.isfinite(loss):
            raise SweepError("bad_request", "loss must be a finite number")
        with self._lock:
            rnd = self._get_round(round_id)
            issue = rnd.issued.get(config_id)
            if issue is None:
                raise SweepError("not_found",
                                 f"config {config_id!r} was never issued")
            if issue["status"] == "reported":
                raise SweepError("duplicate", f"config {config_id!r} already reported")
            if issue["status"] == "expired":
                raise SweepError("expired", f"config {config_id!r} expired")
            target = self._targets[rnd.target]
            accepted = target["best_loss"] is None or loss < target["best_loss"]
            checkpoint_id = None
            if accepted:
                checkpoint_id = checkpoint_doc.get("content_hash") or hashlib.sha256(
                    json.dumps(checkpoint_doc, sort_keys=True).encode()).hexdigest()
                path = self.repo_dir / "checkpoints" / f"{checkpoint_id}.json"
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps(checkpoint_doc))
                os.replace(tmp, path)
                target["best_id"] = checkpoint_id
                target["best_loss"] = loss
            issue["status"] = "reported"
            issue["loss"] = loss
            issue["accepted"] = accepted
            target["history"].append({
                "round_id": round_id, "config_id": config_id, "loss": loss,
                "accepted": accepted, "checkpoint_id": checkpoint_id,
                "setup": rnd.setup,
            })
            # durable before the ack leaves the lock
            self._persist_rounds()
            self._persist_repository()
            if accepted and post_accept is not None:
                report = post_accept(rnd.target, checkpoint_id, checkpoint_doc)
                if report is not None:
                    eval_path = (self.repo_dir / "checkpoints"
                                 / f"{checkpoint_id}.eval.json")
                    tmp = eval_path.with_suffix(".tmp")
                    tmp.write_text(json.dumps(report))
                    os.replace(tmp, eval_path)
            return accepted

    def best(self, target: str):
        with self._lock:
            entry = self._targets.get(target)
            if entry is None or entry["best_id"] is None:
                raise SweepError("no_model", f"no model yet for target {target!r}")
            return entry["best_id"], entry["best_loss"]

    def best_checkpoint_doc(self, target: str) -> dict:
        checkpoint_id, _ = self.best(target)
        path = self.repo_dir / "checkpoints" / f"{checkpoint_id}.json"
        return json.loads(path.read_text())

    def best_hyperparams(self, target: str) -> HyperParams:
        doc = self.best_checkpoint_doc(target)
        return HyperParams.from_json_dict(doc["hyperparams"])

    def history(self, target: str) -> list[dict]:
        with self._lock:
            entry = self._targets.get(target)
            return list(entry["history"]) if entry else []

    def close_round(self, round_id: str) -> dict:
        """Close the round; unreported configs are marked expired.

        Returns the accounting summary {issued, reported, expired}.
        """
        with self._lock:
            rnd = self._get_round(round_id)
            for doc in rnd.issued.values():
                if doc["status"] == "issued":
                    doc["status"] = "expired"
            rnd.open = False
            self._persist_rounds()
            return self.round_accounting(round_id)

    def round_accounting(self, round_id: str) -> dict:
        with self._lock:
            rnd = self._get_round(round_id)
            statuses = [doc["status"] for doc in rnd.issued.values()]
            return {
                "round_id": round_id,
                "target": rnd.target,
                "setup": rnd.setup,
                "open": rnd.open,
                "issued": len(statuses),
                "reported": statuses.count("reported"),
                "expired": statuses.count("expired"),
                "pending": statuses.count("issued"),
            }

    def status(self) -> dict:
        with self._lock:
            return {
                "targets": {
                    target: {"best_id": entry["best_id"],
                             "best_loss": entry["best_loss"],
                             "results": len(entry["history"])}
                    for target, entry in self._targets.items()
                },
                "rounds": [self.round_accounting(rid) for rid in self._rounds],
            }

    def open_rounds(self) -> list[str]:
        with self._lock:
            return [rid for rid, rnd in self._rounds.items() if rnd.open]
