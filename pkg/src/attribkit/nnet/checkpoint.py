"""JSON checkpoints: spec, flat parameters, training config and scalers.

Floats are written with ``repr`` precision, so a reloaded model reproduces
predictions bit for bit.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..core import FeatureSchema, Scaler, ScaledPredictor
from .attention import AttentionNet, AttentionNetSpec
from .mlp import MLP, MlpSpec

FORMAT = "attribkit-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _model_parts(model):
    if isinstance(model, ScaledPredictor):
        return model.inner, model.x_scaler, model.y_scaler
    return model, None, None


def checkpoint_dict(model, train_config=None, schema: FeatureSchema | None = None, extra: dict | None = None) -> dict:
    net, xs, ys = _model_parts(model)
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": net.kind,
        "spec": net.spec.to_dict(),
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in net.params.items()},
        "train_config": None if train_config is None else train_config.to_dict(),
        "x_scaler": None if xs is None else xs.to_dict(),
        "y_scaler": None if ys is None else ys.to_dict(),
        "schema": None if schema is None else schema.to_dict(),
        "extra": extra or {},
    }


def save_checkpoint(path: str | os.PathLike, model, train_config=None, schema=None, extra=None) -> None:
    text = json.dumps(checkpoint_dict(model, train_config, schema, extra), indent=1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")


def model_from_dict(obj: dict):
    if obj.get("format") != FORMAT:
        raise CheckpointError("not an attribkit checkpoint")
    if obj.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {obj.get('version')}")
    params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in obj["params"].items()}
    if obj["kind"] == "mlp":
        net = MLP(MlpSpec.from_dict(obj["spec"]), params)
    elif obj["kind"] == "attention":
        net = AttentionNet(AttentionNetSpec.from_dict(obj["spec"]), params)
    else:
        raise CheckpointError(f"unknown model kind {obj['kind']!r}")
    xs = Scaler.from_dict(obj["x_scaler"]) if obj.get("x_scaler") else None
    ys = Scaler.from_dict(obj["y_scaler"]) if obj.get("y_scaler") else None
    if xs is None and ys is None:
        return net
    return ScaledPredictor(net, xs, ys)


def load_checkpoint(path: str | os.PathLike):
    """Returns ``(model, checkpoint_dict)``."""
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(obj), obj
