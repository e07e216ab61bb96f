"""Synthetic sensor-style datasets with known structure.

``planted_regression`` drives the target from two features only, so any
sound attribution method must rank those two on top.  ``separable_multilabel``
draws well-separated class blobs with one-hot activity labels.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, FeatureSchema

SENSOR_NAMES = (
    "chest_ACC_x",
    "chest_ACC_y",
    "chest_ACC_z",
    "chest_ECG",
    "wrist_BVP",
    "wrist_TEMP",
    "wrist_EDA",
    "chest_Resp",
)

# chest accelerometer axes merge into one sensor
SENSOR_GROUPS = {"chest_ACC_x": "chest_ACC", "chest_ACC_y": "chest_ACC", "chest_ACC_z": "chest_ACC"}


def _names(n: int) -> tuple[str, ...]:
    if n <= len(SENSOR_NAMES):
        return SENSOR_NAMES[:n]
    return SENSOR_NAMES + tuple(f"aux_{i}" for i in range(n - len(SENSOR_NAMES)))


def sensor_grouping(names) -> dict[str, str]:
    return {n: SENSOR_GROUPS.get(n, n) for n in names}


def planted_target(X: np.ndarray, relevant=(0, 2)) -> np.ndarray:
    a, b = relevant
    return 1.5 * X[:, a] - 2.0 * X[:, b] + 0.5 * X[:, a] * X[:, b]


def planted_regression(
    n: int = 1000,
    n_features: int = 6,
    relevant=(0, 2),
    noise: float = 0.1,
    n_subjects: int = 4,
    seed: int = 0,
) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    y = planted_target(X, relevant) + noise * rng.normal(size=n)
    schema = FeatureSchema(_names(n_features), "regression", ("heart_rate",), subject="subject", activity="activity")
    groups = {
        "subject": (np.arange(n) * n_subjects // n + 1).astype(str),
        "activity": rng.integers(1, 4, size=n).astype(str),
    }
    return Dataset(schema, X, y[:, None], groups)


def linear_regression(n: int = 1000, noise: float = 0.01, seed: int = 0) -> Dataset:
    """``y = 2 x1 - x2 + noise`` with standard normal inputs."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = 2.0 * X[:, 0] - X[:, 1] + noise * rng.normal(size=n)
    return Dataset(FeatureSchema(("x1", "x2"), "regression", ("y",)), X, y[:, None])


def separable_multilabel(
    n: int = 1200,
    n_features: int = 6,
    n_labels: int = 3,
    separation: float = 6.0,
    n_subjects: int = 4,
    seed: int = 0,
) -> Dataset:
    """Gaussian blobs, one per activity, with one-hot indicator targets."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_labels, n_features))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    label = rng.integers(0, n_labels, size=n)
    X = centers[label] + rng.normal(size=(n, n_features))
    Y = np.eye(n_labels)[label]
    labels = tuple(f"activity_{k + 1}" for k in range(n_labels))
    schema = FeatureSchema(_names(n_features), "multilabel", labels, subject="subject", activity="activity")
    groups = {
        "subject": (np.arange(n) * n_subjects // n + 1).astype(str),
        "activity": (label + 1).astype(str),
    }
    return Dataset(schema, X, Y, groups)
