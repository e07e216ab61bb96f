"""Domain types, CSV ingestion, splitting and the predictor contract."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence, runtime_checkable

import numpy as np

TARGET_KINDS = ("regression", "multilabel")
METHODS = ("exact", "kernel", "mc", "attention")

# Fixed evaluation chunk: keeps results identical for any worker count.
EVAL_CHUNK_ROWS = 8192
THREADS_ENV = "ATTRIBKIT_NUM_THREADS"


class DataError(ValueError):
    """Raised when a dataset or schema violates its contract."""


# ---------------------------------------------------------------------------
# Schema / dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[str, ...]
    target_kind: str = "regression"
    target_columns: tuple[str, ...] = ()
    subject: str | None = None
    activity: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "target_columns", tuple(self.target_columns))
        if not self.features:
            raise DataError("schema declares no features")
        if any(not name for name in self.features):
            raise DataError("feature names must be non-empty")
        if len(set(self.features)) != len(self.features):
            raise DataError("feature names must be unique")
        if self.target_kind not in TARGET_KINDS:
            raise DataError(f"unknown target kind {self.target_kind!r}")
        if self.target_kind == "regression" and len(self.target_columns) > 1:
            raise DataError("regression target must be a single column")
        overlap = set(self.features) & set(self.target_columns)
        if overlap:
            raise DataError(f"target columns overlap features: {sorted(overlap)}")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def group_keys(self) -> dict[str, str]:
        keys = {}
        if self.subject:
            keys["subject"] = self.subject
        if self.activity:
            keys["activity"] = self.activity
        return keys

    def to_dict(self) -> dict:
        groups = {k: v for k, v in (("subject", self.subject), ("activity", self.activity)) if v}
        return {
            "features": list(self.features),
            "target": {"kind": self.target_kind, "columns": list(self.target_columns)},
            "groups": groups,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureSchema":
        try:
            target = obj.get("target") or {}
            groups = obj.get("groups") or {}
            return cls(
                features=tuple(obj["features"]),
                target_kind=target.get("kind", "regression"),
                target_columns=tuple(target.get("columns", ())),
                subject=groups.get("subject"),
                activity=groups.get("activity"),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"malformed schema: {exc}") from exc


def load_schema(path: str | os.PathLike) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def save_schema(schema: FeatureSchema, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of instances.

    ``index`` holds the original row position of every instance so that row
    identity survives splitting and subsetting.
    """

    schema: FeatureSchema
    rows: np.ndarray
    targets: np.ndarray
    groups: dict[str, np.ndarray] = field(default_factory=dict)
    index: np.ndarray | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.schema.n_features:
            raise DataError(
                f"rows must have shape (n, {self.schema.n_features}), got {rows.shape}"
            )
        if not np.all(np.isfinite(rows)):
            raise DataError("rows contain non-finite values")
        n = rows.shape[0]
        targets = np.asarray(self.targets, dtype=float)
        if targets.ndim == 1:
            targets = targets.reshape(n, -1) if n else targets.reshape(0, 1)
        if targets.shape[0] != n:
            raise DataError("targets and rows differ in length")
        if self.schema.target_kind == "multilabel" and targets.size:
            if not np.all((targets == 0) | (targets == 1)):
                raise DataError("multi-label targets must be 0/1 indicators")
        index = np.arange(n) if self.index is None else np.asarray(self.index, dtype=np.int64)
        if index.shape != (n,):
            raise DataError("index must have one entry per row")
        groups = {}
        for key, values in dict(self.groups).items():
            values = np.asarray(values).astype(str)
            if values.shape != (n,):
                raise DataError(f"group column {key!r} has wrong length")
            groups[key] = _frozen(values)
        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "targets", _frozen(targets))
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "index", _frozen(index))

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.schema.features

    @property
    def n_features(self) -> int:
        return self.schema.n_features

    def take(self, positions: Sequence[int] | np.ndarray) -> "Dataset":
        """Subset by position (not by original index)."""
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            rows=self.rows[positions],
            targets=self.targets[positions],
            groups={k: v[positions] for k, v in self.groups.items()},
            index=self.index[positions],
        )

    def select_group(self, key: dict[str, str]) -> "Dataset":
        mask = np.ones(len(self), dtype=bool)
        for name, value in key.items():
            if name not in self.groups:
                raise DataError(f"dataset has no group column {name!r}")
            mask &= self.groups[name] == str(value)
        return self.take(np.flatnonzero(mask))

    def group_values(self, name: str) -> list[str]:
        if name not in self.groups:
            raise DataError(f"dataset has no group column {name!r}")
        return sorted(set(self.groups[name].tolist()), key=_natural_key)


def _natural_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def load_csv(
    path: str | os.PathLike,
    schema: FeatureSchema,
    delimiter: str = ",",
) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Column order in the file does not matter. Any value that fails to parse or
    is non-finite aborts the load with the offending data row (1-based,
    header excluded) and column in the message.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        numeric = list(schema.features) + list(schema.target_columns)
        for col in numeric + list(schema.group_keys.values()):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}")
        pos = {name: header.index(name) for name in header}
        num_idx = [pos[c] for c in numeric]
        group_idx = {k: pos[c] for k, c in schema.group_keys.items()}

        values, groups = [], {k: [] for k in group_idx}
        for row_no, rec in enumerate(reader, start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"{path}: row {row_no} has {len(rec)} fields, expected {len(header)}"
                )
            parsed = []
            for col, i in zip(numeric, num_idx):
                try:
                    v = float(rec[i])
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse row {row_no}, column {col!r}: {rec[i]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: non-finite value in row {row_no}, column {col!r}: {rec[i]!r}"
                    )
                parsed.append(v)
            values.append(parsed)
            for k, i in group_idx.items():
                groups[k].append(rec[i].strip())

    if not values:
        raise DataError(f"{path}: dataset has no rows")
    table = np.array(values, dtype=float)
    n_feat = schema.n_features
    return Dataset(
        schema=schema,
        rows=table[:, :n_feat],
        targets=table[:, n_feat:] if schema.target_columns else np.zeros((len(table), 0)),
        groups=groups,
    )


def write_csv(dataset: Dataset, path: str | os.PathLike, delimiter: str = ",") -> None:
    schema = dataset.schema
    group_cols = list(schema.group_keys.items())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(list(schema.features) + list(schema.target_columns) + [c for _, c in group_cols])
        for i in range(len(dataset)):
            w.writerow(
                [repr(float(v)) for v in dataset.rows[i]]
                + [repr(float(v)) for v in dataset.targets[i]]
                + [dataset.groups[k][i] for k, _ in group_cols]
            )


# ---------------------------------------------------------------------------
# Splitting and scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split(dataset: Dataset, config: SplitConfig = SplitConfig()) -> tuple[Dataset, Dataset]:
    n = len(dataset)
    if n < 2:
        raise DataError("need at least 2 rows to split")
    n_train = int(math.floor(config.train_fraction * n + 0.5))
    # both sides stay non-empty
    n_train = min(max(n_train, 1), n - 1)
    if config.shuffle:
        order = np.random.default_rng(config.seed).permutation(n)
    else:
        order = np.arange(n)
    return dataset.take(order[:n_train]), dataset.take(order[n_train:])


@dataclass(frozen=True)
class Scaler:
    """Per-column affine transform; constant columns pass through."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def _shift_scale(self):
        shift = np.where(self.constant, 0.0, self.mean)
        scale = np.where(self.constant, 1.0, self.std)
        return shift, scale

    def transform(self, X: np.ndarray) -> np.ndarray:
        shift, scale = self._shift_scale()
        return (np.asarray(X, dtype=float) - shift) / scale

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        shift, scale = self._shift_scale()
        return np.asarray(Z, dtype=float) * scale + shift

    @classmethod
    def fit(cls, X: np.ndarray, names: Sequence[str] | None = None) -> "Scaler":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = std == 0.0
        if np.any(constant):
            labels = [names[i] if names else str(i) for i in np.flatnonzero(constant)]
            warnings.warn(f"constant columns left unscaled: {labels}", stacklevel=2)
        return cls(mean=mean, std=std, constant=constant)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": self.constant.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Scaler":
        return cls(
            mean=np.asarray(obj["mean"], dtype=float),
            std=np.asarray(obj["std"], dtype=float),
            constant=np.asarray(obj["constant"], dtype=bool),
        )


def standardize(dataset: Dataset, scaler: Scaler | None = None) -> tuple[Dataset, Scaler]:
    """Z-score the feature columns (population std).

    Pass a previously fitted ``scaler`` to apply training statistics to a
    held-out split.
    """
    if scaler is None:
        scaler = Scaler.fit(dataset.rows, dataset.feature_names)
    out = Dataset(
        schema=dataset.schema,
        rows=scaler.transform(dataset.rows),
        targets=dataset.targets,
        groups=dataset.groups,
        index=dataset.index,
    )
    return out, scaler


# ---------------------------------------------------------------------------
# Predictor contract
# ---------------------------------------------------------------------------


@runtime_checkable
class Predictor(Protocol):
    """Deterministic batch map ``(m, N) -> (m, K)``."""

    n_outputs: int

    def predict(self, X: np.ndarray) -> np.ndarray: ...


class FunctionPredictor:
    """Adapts a vectorised callable to the :class:`Predictor` protocol."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_outputs: int = 1):
        self.fn = fn
        self.n_outputs = n_outputs

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fn(np.atleast_2d(np.asarray(X, dtype=float))), dtype=float)
        return out.reshape(out.shape[0], self.n_outputs)


class LinearPredictor(FunctionPredictor):
    def __init__(self, weights: Sequence[float], intercept: float = 0.0):
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = float(intercept)
        super().__init__(lambda X: X @ self.weights + self.intercept, 1)


class ScaledPredictor:
    """Wraps a predictor trained on standardised inputs/targets.

    Accepts raw feature rows and returns outputs in the original target
    units, so explanations stay in the data's own coordinates.
    """

    def __init__(self, inner, x_scaler: Scaler | None = None, y_scaler: Scaler | None = None):
        self.inner = inner
        self.x_scaler = x_scaler
        self.y_scaler = y_scaler
        self.n_outputs = inner.n_outputs

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.x_scaler is not None:
            X = self.x_scaler.transform(X)
        out = self.inner.predict(X)
        if self.y_scaler is not None:
            out = self.y_scaler.inverse(out)
        return out


def as_predictor(model: Any, n_outputs: int | None = None) -> Predictor:
    if hasattr(model, "predict") and hasattr(model, "n_outputs"):
        return model
    if callable(model):
        return FunctionPredictor(model, n_outputs or 1)
    raise TypeError(f"cannot use {type(model).__name__} as a predictor")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def evaluate(model: Predictor, X: np.ndarray, n_jobs: int | None = None) -> np.ndarray:
    """Evaluate ``model`` in fixed-size chunks, optionally across threads.

    Chunk boundaries never depend on ``n_jobs``, so the result is
    bit-identical for any worker count.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n_jobs = default_workers() if n_jobs is None else max(1, int(n_jobs))
    starts = range(0, X.shape[0], EVAL_CHUNK_ROWS)
    chunks = [X[s : s + EVAL_CHUNK_ROWS] for s in starts]
    if not chunks:
        return np.zeros((0, model.n_outputs))
    if n_jobs == 1 or len(chunks) == 1:
        parts = [model.predict(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(model.predict, chunks))
    out = np.concatenate([np.asarray(p, dtype=float).reshape(len(c), -1) for p, c in zip(parts, chunks)])
    return out


def background_rows(
    background: Dataset | np.ndarray, cap: int | None = 128, seed: int = 0
) -> np.ndarray:
    """Background matrix, uniformly subsampled without replacement to ``cap`` rows."""
    rows = background.rows if isinstance(background, Dataset) else np.atleast_2d(np.asarray(background, dtype=float))
    if rows.shape[0] == 0:
        raise DataError("background is empty")
    if cap is not None and rows.shape[0] > cap:
        pick = np.sort(np.random.default_rng(seed).choice(rows.shape[0], size=cap, replace=False))
        rows = rows[pick]
    return rows


# ---------------------------------------------------------------------------
# Explanation
# ---------------------------------------------------------------------------

EXACT_TOL = 1e-9


@dataclass(eq=False)
class Explanation:
    """Per-feature attribution of one instance's prediction.

    ``phi`` is ``(N, K)``; ``base_value`` and ``prediction`` have length K.
    """

    base_value: np.ndarray
    phi: np.ndarray
    feature_names: tuple[str, ...]
    method: str
    prediction: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.base_value = np.atleast_1d(np.asarray(self.base_value, dtype=float))
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        self.phi = phi
        self.feature_names = tuple(self.feature_names)
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if phi.shape[0] != len(self.feature_names):
            raise ValueError("phi must have one row per feature")
        if self.base_value.shape != (phi.shape[1],):
            raise ValueError("base_value must have one entry per output")
        if self.prediction is not None:
            self.prediction = np.atleast_1d(np.asarray(self.prediction, dtype=float))

    @property
    def n_features(self) -> int:
        return self.phi.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.phi.shape[1]

    def tolerance(self) -> float | None:
        """Allowed efficiency residual for this estimator, or None."""
        if self.method == "attention":
            return None
        if self.method == "mc":
            stderr = np.asarray(self.diagnostics.get("stderr", np.zeros_like(self.phi)))
            return max(4.0 * float(np.max(np.sum(stderr.reshape(self.phi.shape), axis=0))), 1e-6)
        scale = 1.0
        if self.prediction is not None:
            scale = max(scale, float(np.max(np.abs(self.prediction))), float(np.max(np.abs(self.base_value))))
        return EXACT_TOL * scale

    def efficiency_residual(self) -> np.ndarray:
        if self.prediction is None:
            raise ValueError("explanation carries no prediction")
        return self.phi.sum(axis=0) - (self.prediction - self.base_value)

    def satisfies_efficiency(self) -> bool:
        tol = self.tolerance()
        if tol is None:
            return True
        return bool(np.all(np.abs(self.efficiency_residual()) <= tol))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "feature_names": list(self.feature_names),
            "base_value": self.base_value.tolist(),
            "prediction": None if self.prediction is None else self.prediction.tolist(),
            "phi": self.phi.tolist(),
            "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Explanation":
        return cls(
            base_value=obj["base_value"],
            phi=obj["phi"],
            feature_names=obj["feature_names"],
            method=obj["method"],
            prediction=obj.get("prediction"),
            diagnostics=obj.get("diagnostics", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
