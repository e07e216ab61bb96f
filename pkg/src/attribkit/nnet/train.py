"""Mini-batch training loop shared by both model families."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .attention import AttentionNet, AttentionNetSpec
from .functional import LOSSES, loss_and_grad
from .mlp import MLP, MlpSpec
from .optim import Adam


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "mean_absolute_error"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _arrays(data, targets=None):
    if targets is None:
        return np.asarray(data.rows, dtype=float), np.asarray(data.targets, dtype=float)
    return np.asarray(data, dtype=float), np.asarray(targets, dtype=float)


def fit(model, X: np.ndarray, Y: np.ndarray, config: TrainConfig) -> list[float]:
    """Train ``model`` in place; returns the mean loss of each epoch."""
    Y = Y.reshape(len(Y), -1)
    if X.shape[1] != model.n_inputs or Y.shape[1] != model.n_outputs:
        raise ValueError(
            f"data shape {X.shape[1]}->{Y.shape[1]} does not match model {model.n_inputs}->{model.n_outputs}"
        )
    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    history = []
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            logits, cache = model.forward(X[idx])
            loss, dlogits = loss_and_grad(logits, Y[idx], model.output_activation, config.loss)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            opt.step(model.backward(dlogits, cache))
            total += float(loss) * len(idx)
        history.append(total / n)
        if not math.isfinite(history[-1]):
            raise TrainingDivergedError(epoch, history[-1])
    return history


def train_mlp(spec: MlpSpec, train, config: TrainConfig = TrainConfig(), targets=None):
    """Returns ``(model, loss_history)``; ``train`` is a Dataset or a feature matrix with ``targets``."""
    X, Y = _arrays(train, targets)
    model = MLP(spec, seed=config.seed)
    return model, fit(model, X, Y, config)


def train_attention_net(spec: AttentionNetSpec, train, config: TrainConfig = TrainConfig(), targets=None):
    X, Y = _arrays(train, targets)
    model = AttentionNet(spec, seed=config.seed)
    return model, fit(model, X, Y, config)
