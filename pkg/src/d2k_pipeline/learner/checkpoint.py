"""Checkpoint container and its versioned JSON file format.

The file embeds a sha256 content hash over the canonical document (minus
the hash field itself); the loader verifies the hash and every weight
shape against the declared hyperparameters before accepting a file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .network import LearnerError

if TYPE_CHECKING:  # pragma: no cover
    from .training import HyperParams

FORMAT_VERSION = 1


@dataclass
class Normalization:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def __post_init__(self):
        for name in ("x_mean", "x_std", "y_mean", "y_std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.x_std <= 0) or np.any(self.y_std <= 0):
            raise LearnerError("normalization std must be > 0 per feature")

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name).tolist()
                for name in ("x_mean", "x_std", "y_mean", "y_std")}


@dataclass
class Provenance:
    view_id: str | None = None
    data_hash: str | None = None
    parent_id: str | None = None

    def to_json_dict(self) -> dict:
        return {"view_id": self.view_id, "data_hash": self.data_hash,
                "parent_id": self.parent_id}


@dataclass
class ModelCheckpoint:
    weights: list           # per-layer dicts, readout last (see network.py)
    normalization: Normalization
    hyperparams: "HyperParams"
    provenance: Provenance
    validation_mae: float | None = None
    checkpoint_id: str | None = None

    def __post_init__(self):
        n_layers = len(self.weights) - 1
        hp = self.hyperparams
        if n_layers != hp.n_recurrent_layers:
            raise LearnerError(
                f"checkpoint has {n_layers} recurrent layers, hyperparams say "
                f"{hp.n_recurrent_layers}")
        hidden = hp.hidden_size
        dim = self.normalization.x_mean.shape[0]
        for l in range(n_layers):
            expected = {"wx": (4 * hidden, dim), "wh": (4 * hidden, hidden),
                        "b": (4 * hidden,)}
            for key, shape in expected.items():
                if self.weights[l][key].shape != shape:
                    raise LearnerError(
                        f"layer {l} tensor {key} has shape "
                        f"{self.weights[l][key].shape}, expected {shape}")
            dim = hidden
        out_dim = self.normalization.y_mean.shape[0]
        readout = self.weights[-1]
        if readout["wy"].shape != (out_dim, hidden) or readout["by"].shape != (out_dim,):
            raise LearnerError("readout shape inconsistent with normalization")

    @property
    def n_joints(self) -> int:
        return self.normalization.y_mean.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "hyperparams": self.hyperparams.to_json_dict(),
            "normalization": self.normalization.to_json_dict(),
            "provenance": self.provenance.to_json_dict(),
            "validation_mae": self.validation_mae,
            "weights": [{k: v.tolist() for k, v in group.items()}
                        for group in self.weights],
        }

    def content_hash(self) -> str:
        doc = self.to_json_dict()
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def refresh_id(self) -> str:
        self.checkpoint_id = self.content_hash()
        return self.checkpoint_id

    def save(self, path) -> str:
        doc = self.to_json_dict()
        doc["content_hash"] = self.refresh_id()
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
        return doc["content_hash"]


def load_checkpoint(path) -> ModelCheckpoint:
    from .training import HyperParams  # local import to avoid a cycle

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise LearnerError(f"unsupported checkpoint format: "
                           f"{doc.get('format_version')!r}")
    claimed = doc.pop("content_hash", None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    actual = hashlib.sha256(blob.encode("utf-8")).hexdigest()
    if claimed != actual:
        raise LearnerError("checkpoint content hash mismatch")
    weights = [{k: np.asarray(v, dtype=float) for k, v in group.items()}
               for group in doc["weights"]]
    prov_doc = doc.get("provenance") or {}
    ckpt = ModelCheckpoint(
        weights=weights,
        normalization=Normalization(**doc["normalization"]),
        hyperparams=HyperParams.from_json_dict(doc["hyperparams"]),
        provenance=Provenance(**prov_doc),
        validation_mae=doc.get("validation_mae"),
    )
    ckpt.checkpoint_id = claimed
    return ckpt
