"""From-scratch networks: MLP, attention network, Adam, metrics."""

from .attention import (
    AttentionNet,
    AttentionNetSpec,
    AttentionSummary,
    AttentionTrace,
    attention_scores,
    attention_weights,
    context_vector,
    extract_attention,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .metrics import classification_metrics, regression_metrics
from .mlp import MLP, MlpSpec
from .optim import Adam
from .train import TrainConfig, TrainingDivergedError, fit, train_attention_net, train_mlp

__all__ = [
    "Adam",
    "AttentionNet",
    "AttentionNetSpec",
    "AttentionSummary",
    "AttentionTrace",
    "MLP",
    "MlpSpec",
    "TrainConfig",
    "TrainingDivergedError",
    "attention_scores",
    "attention_weights",
    "classification_metrics",
    "context_vector",
    "extract_attention",
    "fit",
    "grad_check",
    "load_checkpoint",
    "regression_metrics",
    "save_checkpoint",
    "train_attention_net",
    "train_mlp",
]
