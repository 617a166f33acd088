"""Training, cross-validation, fine-tuning, and evaluation for the
recurrent inverse-dynamics model.

A dataset is a list of ``(features, targets)`` pairs, one per trajectory:
features (T, 3n) stacking q, qd, qdd per step and targets (T, n) in N m.
Training minimizes mean absolute error on normalized torques with the
adaptive-moment optimizer; cross-validation is k-fold over whole
trajectories to keep training windows from leaking across folds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import ModelCheckpoint, Normalization, Provenance
from .network import (
    AdamOptimizer,
    LearnerError,
    clone_weights,
    forward,
    init_weights,
    mae_loss_and_gradients,
    n_layer_groups,
)

HIDDEN_SIZES = (16, 32, 64)
MAX_RECURRENT_LAYERS = 3
MAX_UNFROZEN = 5


@dataclass(frozen=True)
class HyperParams:
    n_recurrent_layers: int = 1
    hidden_size: int = 32
    learning_rate: float = 1e-3
    sequence_length: int = 32
    batch_size: int = 16
    epochs: int = 50
    unfrozen_layers: int = 0  # only meaningful for fine-tuning
    rng_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_recurrent_layers <= MAX_RECURRENT_LAYERS:
            raise LearnerError(
                f"n_recurrent_layers must be in [1, {MAX_RECURRENT_LAYERS}]")
        if self.hidden_size not in HIDDEN_SIZES:
            raise LearnerError(f"hidden_size must be one of {HIDDEN_SIZES}")
        if self.learning_rate <= 0:
            raise LearnerError("learning_rate must be > 0")
        if self.sequence_length < 2:
            raise LearnerError("sequence_length must be >= 2")
        if self.batch_size < 1:
            raise LearnerError("batch_size must be >= 1")
        if self.epochs < 1:
            raise LearnerError("epochs must be >= 1")
        if not 0 <= self.unfrozen_layers <= MAX_UNFROZEN:
            raise LearnerError(f"unfrozen_layers must be in [0, {MAX_UNFROZEN}]")

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "HyperParams":
        return cls(**doc)


@dataclass
class EvalReport:
    mae: float
    per_joint_mae: list
    theoretical_max_mae: float
    sensor_floor: float = 0.15

    def __post_init__(self):
        if not 0 <= self.mae <= self.theoretical_max_mae:
            raise LearnerError(
                f"mae {self.mae} outside [0, {self.theoretical_max_mae}]")

    def to_json_dict(self) -> dict:
        return {
            "mae": self.mae,
            "per_joint_mae": list(self.per_joint_mae),
            "theoretical_max_mae": self.theoretical_max_mae,
            "sensor_floor": self.sensor_floor,
        }


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    cross_validation_loss: float
    epoch_validation_mae: list = field(default_factory=list)


def sequences_from_records(records) -> list[tuple[np.ndarray, np.ndarray]]:
    """(features, targets) per record: features stack [q, qd, qdd] per step."""
    out = []
    for record in records:
        features = np.concatenate([record.q, record.qd, record.qdd], axis=1)
        out.append((features, record.tau.copy()))
    return out


def fit_normalization(dataset) -> Normalization:
    features = np.concatenate([f for f, _ in dataset], axis=0)
    targets = np.concatenate([t for _, t in dataset], axis=0)
    # a strictly positive std keeps constant features well-defined
    return Normalization(
        x_mean=features.mean(axis=0),
        x_std=np.maximum(features.std(axis=0), 1e-8),
        y_mean=targets.mean(axis=0),
        y_std=np.maximum(targets.std(axis=0), 1e-8),
    )


def init_model(hp: HyperParams, n_joints: int) -> ModelCheckpoint:
    """Fresh checkpoint with documented uniform +-1/sqrt(fan-in) weights."""
    if n_joints < 1:
        raise LearnerError("n_joints must be >= 1")
    rng = np.random.default_rng(hp.rng_seed)
    weights = init_weights(hp.n_recurrent_layers, hp.hidden_size,
                           3 * n_joints, n_joints, rng)
    norm = Normalization(
        x_mean=np.zeros(3 * n_joints), x_std=np.ones(3 * n_joints),
        y_mean=np.zeros(n_joints), y_std=np.ones(n_joints),
    )
    return ModelCheckpoint(weights=weights, normalization=norm, hyperparams=hp,
                           provenance=Provenance(), validation_mae=None)


def predict(ckpt: ModelCheckpoint, features: np.ndarray) -> np.ndarray:
    """Torque predictions in N m for one sequence (T, 3n) -> (T, n).

    Pure function of (checkpoint, sequence): recurrent state starts at zero
    on every call.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise LearnerError(f"sequence must be 2-d (time, features), got {features.shape}")
    norm = ckpt.normalization
    x = (features[None, :, :] - norm.x_mean) / norm.x_std
    y = forward(ckpt.weights, x)[0]
    return y * norm.y_std + norm.y_mean


def dataset_mae(ckpt: ModelCheckpoint, dataset) -> float:
    """Mean absolute error in N m over all steps and joints."""
    total = 0.0
    count = 0
    for features, targets in dataset:
        pred = predict(ckpt, features)
        total += float(np.abs(pred - targets).sum())
        count += targets.size
    if count == 0:
        raise LearnerError("empty dataset")
    return total / count


def _windows(dataset, norm: Normalization, length: int):
    """Half-overlapping normalized windows; skips too-short trajectories."""
    xs, ys = [], []
    skipped = 0
    stride = max(length // 2, 1)
    for features, targets in dataset:
        steps = features.shape[0]
        if steps < length:
            skipped += 1
            continue
        for start in range(0, steps - length + 1, stride):
            stop = start + length
            xs.append((features[start:stop] - norm.x_mean) / norm.x_std)
            ys.append((targets[start:stop] - norm.y_mean) / norm.y_std)
    if skipped:
        warnings.warn(f"skipped {skipped} trajectories shorter than the "
                      f"{length}-step training window", stacklevel=3)
    if not xs:
        raise LearnerError("all trajectories shorter than the training window")
    return np.stack(xs), np.stack(ys)


def _fit(weights, norm, dataset, hp: HyperParams, unfrozen_groups, rng,
         val_dataset=None, val_norm_ckpt=None):
    """Optimize in place; returns the per-epoch validation MAE trace."""
    x, y = _windows(dataset, norm, hp.sequence_length)
    n_windows = x.shape[0]
    optimizer = AdamOptimizer(weights, hp.learning_rate, unfrozen_groups)
    trace = []
    for _ in range(hp.epochs):
        order = rng.permutation(n_windows)
        for start in range(0, n_windows, hp.batch_size):
            batch = order[start:start + hp.batch_size]
            _, grads = mae_loss_and_gradients(weights, x[batch], y[batch],
                                              unfrozen_groups)
            optimizer.step(weights, grads)
        if val_dataset is not None:
            trace.append(dataset_mae(val_norm_ckpt, val_dataset))
    return trace


def _fold_split(n_items: int, folds: int):
    """Deterministic round-robin fold assignment over trajectory indices."""
    return [[i for i in range(n_items) if i % folds == f] for f in range(folds)]


def _cross_validate(base_weights, dataset, hp, folds, unfrozen_groups,
                    fixed_norm=None):
    fold_indices = _fold_split(len(dataset), folds)
    losses = []
    for f, held_out in enumerate(fold_indices):
        if not held_out or len(held_out) == len(dataset):
            continue  # degenerate fold, nothing trained or nothing held out
        train_set = [dataset[i] for i in range(len(dataset)) if i % folds != f]
        val_set = [dataset[i] for i in held_out]
        norm = fixed_norm if fixed_norm is not None else fit_normalization(train_set)
        weights = clone_weights(base_weights)
        rng = np.random.default_rng([hp.rng_seed, f])
        _fit(weights, norm, train_set, hp, unfrozen_groups, rng)
        probe = ModelCheckpoint(weights=weights, normalization=norm,
                                hyperparams=hp, provenance=Provenance(),
                                validation_mae=None)
        losses.append(dataset_mae(probe, val_set))
    if not losses:
        raise LearnerError("cross-validation produced no usable folds")
    return float(np.mean(losses))


def train(ckpt: ModelCheckpoint, dataset, hp: HyperParams, folds: int = 3,
          val_dataset=None, provenance: Provenance | None = None) -> TrainResult:
    """Full training from the checkpoint's initial weights.

    Cross-validation loss is the mean held-out MAE over ``folds`` whole-
    trajectory folds; the returned checkpoint is then trained on the full
    dataset.  Deterministic given (dataset, hp, folds).
    """
    if not dataset:
        raise LearnerError("empty dataset")
    if folds < 2:
        raise LearnerError("folds must be >= 2")
    cv_loss = _cross_validate(ckpt.weights, dataset, hp, folds, None)

    norm = fit_normalization(dataset)
    weights = clone_weights(ckpt.weights)
    final = ModelCheckpoint(weights=weights, normalization=norm, hyperparams=hp,
                            provenance=provenance or Provenance(),
                            validation_mae=None)
    rng = np.random.default_rng([hp.rng_seed, 0xFFFF])
    trace = _fit(weights, norm, dataset, hp, None, rng,
                 val_dataset=val_dataset, val_norm_ckpt=final)
    if val_dataset is not None:
        final.validation_mae = trace[-1]
    final.refresh_id()
    return TrainResult(final, cv_loss, trace)


def unfrozen_group_set(n_groups: int, unfrozen_layers: int) -> set[int]:
    """Last-k layer groups counting the readout first, then top-down."""
    return set(range(n_groups - unfrozen_layers, n_groups))


def finetune(parent: ModelCheckpoint, dataset, hp: HyperParams, folds: int = 3,
             val_dataset=None, provenance: Provenance | None = None) -> TrainResult:
    """Adapt the last ``hp.unfrozen_layers`` layer groups of ``parent``.

    Groups are counted from the output side: the readout first, then
    recurrent layers inward.  Frozen weights stay bit-identical; the
    parent's normalization is reused so frozen layers keep seeing inputs
    on the scale they were trained with.
    """
    if not dataset:
        raise LearnerError("empty dataset")
    if folds < 2:
        raise LearnerError("folds must be >= 2")
    k = hp.unfrozen_layers
    groups_total = n_layer_groups(parent.weights)
    if k == 0:
        raise LearnerError("unfrozen_layers must be >= 1 for fine-tuning")
    if k > groups_total:
        raise LearnerError(
            f"unfrozen_layers {k} exceeds the {groups_total} available layer groups")
    if (hp.n_recurrent_layers != parent.hyperparams.n_recurrent_layers
            or hp.hidden_size != parent.hyperparams.hidden_size):
        raise LearnerError("fine-tune hyperparameters must match the parent "
                           "architecture")
    unfrozen = unfrozen_group_set(groups_total, k)
    norm = parent.normalization
    cv_loss = _cross_validate(parent.weights, dataset, hp, folds, unfrozen,
                              fixed_norm=norm)

    weights = clone_weights(parent.weights)
    prov = provenance or Provenance()
    prov.parent_id = parent.checkpoint_id
    child = ModelCheckpoint(weights=weights, normalization=norm, hyperparams=hp,
                            provenance=prov, validation_mae=None)
    rng = np.random.default_rng([hp.rng_seed, 0xFFFF])
    trace = _fit(weights, norm, dataset, hp, unfrozen, rng,
                 val_dataset=val_dataset, val_norm_ckpt=child)
    if val_dataset is not None:
        child.validation_mae = trace[-1]
    child.refresh_id()
    return TrainResult(child, cv_loss, trace)


def theoretical_max_mae(eval_dataset, tau_max) -> float:
    """Per-joint mean of (tau_max + worst target magnitude): the error of a
    predictor pinned to the wrong torque extreme."""
    if not eval_dataset:
        raise LearnerError("empty dataset")
    tau_max = np.asarray(tau_max, dtype=float)
    worst = None
    for _, targets in eval_dataset:
        peak = np.abs(targets).max(axis=0)
        worst = peak if worst is None else np.maximum(worst, peak)
    return float(np.mean(tau_max + worst))


def evaluate(ckpt: ModelCheckpoint, eval_dataset, tau_max,
             sensor_floor: float = 0.15) -> EvalReport:
    """MAE over an evaluation dataset plus the report's outer bounds."""
    if not eval_dataset:
        raise LearnerError("empty dataset")
    tau_max = np.asarray(tau_max, dtype=float)
    abs_err_sum = None
    count = 0
    for features, targets in eval_dataset:
        pred = predict(ckpt, features)
        err = np.abs(pred - targets).sum(axis=0)
        abs_err_sum = err if abs_err_sum is None else abs_err_sum + err
        count += targets.shape[0]
    per_joint = abs_err_sum / count
    return EvalReport(mae=float(np.mean(per_joint)),
                      per_joint_mae=per_joint.tolist(),
                      theoretical_max_mae=theoretical_max_mae(eval_dataset, tau_max),
                      sensor_floor=sensor_floor)
