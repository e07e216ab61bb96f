"""Activations and losses with hand-written derivatives."""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("identity", "relu", "leaky_relu", "sigmoid", "softmax", "tanh")
LOSSES = ("mean_absolute_error", "binary_crossentropy")


def as_float(x) -> np.ndarray:
    """Array view that keeps floating dtypes (e.g. longdouble) and promotes the rest."""
    a = np.asarray(x)
    return a if np.issubdtype(a.dtype, np.floating) else a.astype(float)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z, axis=-1):
    shifted = z - np.max(z, axis=axis, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=axis, keepdims=True)


def activate(z: np.ndarray, kind: str, slope: float = 0.01) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "softmax":
        return softmax(z)
    if kind == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(da: np.ndarray, z: np.ndarray, a: np.ndarray, kind: str, slope: float = 0.01) -> np.ndarray:
    """Gradient wrt pre-activation ``z`` given the gradient wrt output ``a``."""
    if kind == "identity":
        return da
    if kind == "relu":
        return da * (z > 0)
    if kind == "leaky_relu":
        return da * np.where(z > 0, 1.0, slope)
    if kind == "sigmoid":
        return da * a * (1.0 - a)
    if kind == "softmax":
        return a * (da - np.sum(da * a, axis=-1, keepdims=True))
    if kind == "tanh":
        return da * (1.0 - a * a)
    raise ValueError(f"unknown activation {kind!r}")


def loss_and_grad(logits: np.ndarray, y: np.ndarray, output_activation: str, loss: str):
    """Mean loss over all output entries and its gradient wrt ``logits``.

    The loss keeps the dtype of ``logits``.
    """
    y = as_float(y).reshape(logits.shape)
    size = logits.size
    if loss == "mean_absolute_error":
        pred = activate(logits, output_activation)
        r = pred - y
        value = np.mean(np.abs(r))
        dpred = np.sign(r) / size
        return value, activation_backward(dpred, logits, pred, output_activation)
    if loss == "binary_crossentropy":
        if output_activation == "sigmoid":
            # fused: stable in the logits, gradient is (p - y)
            value = np.mean(np.logaddexp(0.0, logits) - y * logits)
            return value, (sigmoid(logits) - y) / size
        if output_activation == "softmax":
            logp = logits - np.max(logits, axis=-1, keepdims=True)
            logp = logp - np.log(np.sum(np.exp(logp), axis=-1, keepdims=True))
            p = np.exp(logp)
            log1mp = np.log1p(-np.minimum(p, 1.0 - 1e-15))
            value = -np.mean(y * logp + (1.0 - y) * log1mp)
            dp = (-y / np.maximum(p, 1e-300) + (1.0 - y) / (1.0 - np.minimum(p, 1.0 - 1e-15))) / size
            return value, activation_backward(dp, logits, p, "softmax")
        raise ValueError("binary_crossentropy needs a sigmoid or softmax output")
    raise ValueError(f"unknown loss {loss!r}")
