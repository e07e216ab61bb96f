"""Regression and multi-label classification metrics."""

from __future__ import annotations

import numpy as np


def regression_metrics(pred, actual) -> tuple[float, float]:
    """``(MAE, MSE)``."""
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape or pred.size == 0:
        raise ValueError("pred and actual must be non-empty and of equal length")
    r = pred - actual
    return float(np.mean(np.abs(r))), float(np.mean(r * r))


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def classification_metrics(prob, actual, threshold: float = 0.5) -> dict:
    """Macro-averaged precision, recall, F1 and balanced accuracy.

    A rate whose denominator is zero for some label counts as 0 for that
    label; the label is listed under ``warnings``.
    """
    prob = np.asarray(prob, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if prob.ndim == 1:
        prob, actual = prob[:, None], actual.reshape(-1, 1)
    if prob.shape != actual.shape:
        raise ValueError(f"shape mismatch {prob.shape} vs {actual.shape}")
    if not np.all((actual == 0) | (actual == 1)):
        raise ValueError("actual must hold 0/1 indicators")
    hit = prob >= threshold
    truth = actual == 1
    per_label = []
    warnings = []
    for k in range(prob.shape[1]):
        tp = int(np.sum(hit[:, k] & truth[:, k]))
        fp = int(np.sum(hit[:, k] & ~truth[:, k]))
        fn = int(np.sum(~hit[:, k] & truth[:, k]))
        tn = int(np.sum(~hit[:, k] & ~truth[:, k]))
        if tp + fn == 0:
            warnings.append(f"label {k}: no positives, recall set to 0")
        if tp + fp == 0:
            warnings.append(f"label {k}: no predicted positives, precision set to 0")
        if tn + fp == 0:
            warnings.append(f"label {k}: no negatives, specificity set to 0")
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        f1 = _ratio(2 * precision * recall, precision + recall)
        tnr = _ratio(tn, tn + fp)
        per_label.append((precision, recall, f1, 0.5 * (recall + tnr)))
    macro = np.mean(np.array(per_label), axis=0)
    return {
        "precision": float(macro[0]),
        "recall": float(macro[1]),
        "f1": float(macro[2]),
        "balanced_accuracy": float(macro[3]),
        "per_label": [dict(zip(("precision", "recall", "f1", "balanced_accuracy"), map(float, r))) for r in per_label],
        "warnings": warnings,
    }
