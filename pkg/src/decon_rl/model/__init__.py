"""Sequential latent-variable model with a time-independent confounder u."""

from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint_header, save_checkpoint
from .elbo import (
    TERMS,
    Batch,
    ElboBreakdown,
    NonFiniteTermError,
    compute_elbo,
    elbo_alt,
    elbo_decon,
    elbo_samples,
    importance_log_likelihood,
    loss_drl,
    sequence_terms,
)
from .inference import (
    Rollout,
    counterfactual_rollout,
    posterior_u,
    reconstruct,
    square_present,
    violates_consecutiveness,
)
from .networks import Model, ModelArch, ModelDims, combine
from .training import CSV_COLUMNS, TrainConfig, train_model

__all__ = [
    "CSV_COLUMNS",
    "TERMS",
    "Batch",
    "CheckpointError",
    "ElboBreakdown",
    "Model",
    "ModelArch",
    "ModelDims",
    "NonFiniteTermError",
    "Rollout",
    "TrainConfig",
    "combine",
    "compute_elbo",
    "counterfactual_rollout",
    "elbo_alt",
    "elbo_decon",
    "elbo_samples",
    "importance_log_likelihood",
    "load_checkpoint",
    "loss_drl",
    "posterior_u",
    "read_checkpoint_header",
    "reconstruct",
    "save_checkpoint",
    "sequence_terms",
    "square_present",
    "train_model",
    "violates_consecutiveness",
]
