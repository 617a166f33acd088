from .checkpoint import ModelCheckpoint, Normalization, Provenance, load_checkpoint
from .network import (
    AdamOptimizer,
    LearnerError,
    clone_weights,
    forward,
    init_weights,
    mae_loss_and_gradients,
    n_layer_groups,
)
from .training import (
    EvalReport,
    HyperParams,
    TrainResult,
    dataset_mae,
    evaluate,
    finetune,
    fit_normalization,
    init_model,
    predict,
    sequences_from_records,
    theoretical_max_mae,
    train,
    unfrozen_group_set,
)

__all__ = [
    "ModelCheckpoint", "Normalization", "Provenance", "load_checkpoint",
    "AdamOptimizer", "LearnerError", "clone_weights", "forward",
    "init_weights", "mae_loss_and_gradients", "n_layer_groups",
    "EvalReport", "HyperParams", "TrainResult", "dataset_mae", "evaluate",
    "finetune", "fit_normalization", "init_model", "predict",
    "sequences_from_records", "theoretical_max_mae", "train", "unfrozen_group_set",
]
