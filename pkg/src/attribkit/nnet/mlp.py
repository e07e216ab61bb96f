"""Fully connected network trained by backpropagation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .functional import activate, activation_backward, as_float


@dataclass(frozen=True)
class MlpSpec:
    sizes: tuple[int, ...]
    hidden_activation: str = "leaky_relu"
    output_activation: str = "identity"
    leaky_slope: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 3:
            raise ValueError("an MLP needs at least one hidden layer")
        if any(s < 1 for s in self.sizes):
            raise ValueError("layer sizes must be positive")
        if self.hidden_activation not in ("relu", "leaky_relu"):
            raise ValueError(f"hidden activation must be relu or leaky_relu, not {self.hidden_activation!r}")
        if self.output_activation not in ("relu", "sigmoid", "softmax", "identity"):
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @classmethod
    def regression(cls, n_in: int, n_out: int = 1, hidden=(64, 32, 16)) -> "MlpSpec":
        return cls((n_in, *hidden, n_out), "relu", "identity")

    @classmethod
    def classification(cls, n_in: int, n_labels: int, hidden=(64, 32, 16)) -> "MlpSpec":
        return cls((n_in, *hidden, n_labels), "leaky_relu", "sigmoid")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(**d)


def uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class MLP:
    kind = "mlp"

    def __init__(self, spec: MlpSpec, params: dict | None = None, seed: int = 0):
        self.spec = spec
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for l, (n_in, n_out) in enumerate(zip(spec.sizes[:-1], spec.sizes[1:])):
                params[f"W{l}"] = uniform_fan_in(rng, n_in, (n_in, n_out))
                params[f"b{l}"] = uniform_fan_in(rng, n_in, (n_out,))
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}

    @property
    def n_inputs(self) -> int:
        return self.spec.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.spec.sizes[-1]

    @property
    def output_activation(self) -> str:
        return self.spec.output_activation

    @property
    def n_layers(self) -> int:
        return len(self.spec.sizes) - 1

    def forward(self, X: np.ndarray):
        a = np.atleast_2d(as_float(X))
        cache = [(a, None)]
        for l in range(self.n_layers):
            z = a @ self.params[f"W{l}"] + self.params[f"b{l}"]
            if l < self.n_layers - 1:
                a = activate(z, self.spec.hidden_activation, self.spec.leaky_slope)
                cache.append((a, z))
            else:
                cache.append((None, z))
        return z, cache

    def backward(self, dlogits: np.ndarray, cache) -> dict:
        grads = {}
        dz = dlogits
        for l in reversed(range(self.n_layers)):
            a_prev = cache[l][0]
            grads[f"W{l}"] = a_prev.T @ dz
            grads[f"b{l}"] = dz.sum(axis=0)
            if l > 0:
                da = dz @ self.params[f"W{l}"].T
                a, z = cache[l]
                dz = activation_backward(da, z, a, self.spec.hidden_activation, self.spec.leaky_slope)
        return grads

    def predict(self, X: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(X)
        return activate(logits, self.spec.output_activation)
