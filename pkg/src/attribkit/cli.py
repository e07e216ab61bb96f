"""``attribkit`` command line: generate data, train, explain, verify.

Exit codes: 0 success, 1 I/O failure or failed verification, 2 invalid
configuration, 3 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import synth
from .core import (
    DataError,
    Dataset,
    FeatureSchema,
    ScaledPredictor,
    Scaler,
    SplitConfig,
    background_rows,
    load_csv,
    load_schema,
    save_schema,
    split,
    write_csv,
)
from .exact import SUBSET_CAP, TooManyPlayersError
from .explain import (
    FORMATS,
    global_importance,
    group_explanations,
    importance_from_matrix,
    local_force,
    make_estimator,
    write_report,
)
from .kernel import DEFAULT_BUDGET
from .nnet.attention import AttentionNet, AttentionNetSpec, extract_attention
from .nnet.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nnet.metrics import classification_metrics, regression_metrics
from .nnet.mlp import MLP, MlpSpec
from .nnet.train import TrainConfig, TrainingDivergedError, fit
from .verify import SUITES, run_suite

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="attribkit", description="Shapley and attention explanations for tabular models.")
    # argparse exits with 2 on bad usage, which is also our config-error code
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a bundled synthetic dataset and its schema")
    g.add_argument("--kind", choices=("regression", "classification", "linear"), default="regression",
                   help="planted-relevance regression, separable multi-label classification, or y = 2x1 - x2")
    g.add_argument("--rows", type=int, default=1000, help="number of rows (default 1000)")
    g.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    g.add_argument("--out", required=True, help="CSV file to write")
    g.add_argument("--schema", help="schema JSON to write (default: OUT with .schema.json)")

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--data", required=True, help="CSV data file")
    t.add_argument("--schema", required=True, help="schema JSON")
    t.add_argument("--task", required=True, choices=("regression", "classification"))
    t.add_argument("--model", required=True, choices=("mlp", "attention"))
    t.add_argument("--split", type=float, default=0.8, help="train fraction (default 0.8)")
    t.add_argument("--seed", type=int, default=0, help="split, initialisation and shuffling seed (default 0)")
    t.add_argument("--epochs", type=int, default=100, help="default 100")
    t.add_argument("--batch-size", type=int, default=64, help="default 64")
    t.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default 1e-3)")
    t.add_argument("--out", required=True, help="checkpoint file to write")

    e = sub.add_parser("explain", help="explain predictions of a checkpointed model")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="CSV data file (same schema as training)")
    e.add_argument("--method", required=True, choices=("exact", "kernel", "mc", "attention"))
    sel = e.add_mutually_exclusive_group(required=True)
    sel.add_argument("--instance", type=int, help="0-based data row to explain")
    sel.add_argument("--group", help="group selector such as subject=2 or subject=2,activity=1")
    e.add_argument("--limit", type=int, default=200, help="max instances per group (default 200)")
    e.add_argument("--budget", type=int, default=None,
                   help=f"kernel coalition budget (default min(2^p - 2, {DEFAULT_BUDGET}))")
    e.add_argument("--samples", type=int, default=2000, help="mc samples per feature (default 2000)")
    e.add_argument("--background", type=int, default=128, help="background rows from the training split (default 128)")
    e.add_argument("--seed", type=int, default=0, help="estimator seed (default 0)")
    e.add_argument("--output-index", type=int, default=0, help="model output to report (default 0)")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--format", choices=FORMATS, default="json",
                   help="report format; a JSON report is always written as well (default json)")

    v = sub.add_parser("verify", help="run a built-in verification suite")
    v.add_argument("--suite", required=True, choices=tuple(SUITES))
    return p


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    if args.rows < 2:
        raise ConfigError("--rows must be at least 2")
    if args.kind == "regression":
        ds = synth.planted_regression(n=args.rows, seed=args.seed)
    elif args.kind == "classification":
        ds = synth.separable_multilabel(n=args.rows, seed=args.seed)
    else:
        ds = synth.linear_regression(n=args.rows, seed=args.seed)
    schema_path = args.schema or str(Path(args.out).with_suffix(".schema.json"))
    write_csv(ds, args.out)
    save_schema(ds.schema, schema_path)
    print(f"wrote {len(ds)} rows to {args.out}")
    print(f"wrote schema to {schema_path}")
    return EXIT_OK


def _build_model(kind: str, task: str, n_in: int, n_out: int, seed: int):
    if kind == "mlp":
        spec = MlpSpec.regression(n_in, n_out) if task == "regression" else MlpSpec.classification(n_in, n_out)
        return MLP(spec, seed=seed)
    head = "identity" if task == "regression" else "sigmoid"
    return AttentionNet(AttentionNetSpec(n_in, n_out, output_activation=head), seed=seed)


def cmd_train(args) -> int:
    schema = load_schema(args.schema)
    want = "regression" if args.task == "regression" else "multilabel"
    if schema.target_kind != want:
        raise ConfigError(
            f"--task {args.task} does not match the schema target kind {schema.target_kind!r}"
        )
    split_cfg = SplitConfig(train_fraction=args.split, seed=args.seed)
    loss = "mean_absolute_error" if args.task == "regression" else "binary_crossentropy"
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, loss=loss, seed=args.seed)
    data = load_csv(args.data, schema)
    train, test = split(data, split_cfg)

    xs = Scaler.fit(train.rows, schema.features)
    ys = Scaler.fit(train.targets) if args.task == "regression" else None
    net = _build_model(args.model, args.task, schema.n_features, train.targets.shape[1], args.seed)
    Y = ys.transform(train.targets) if ys is not None else train.targets
    history = fit(net, xs.transform(train.rows), Y, config)
    model = ScaledPredictor(net, xs, ys)

    pred = model.predict(test.rows)
    if args.task == "regression":
        mae, mse = regression_metrics(pred, test.targets)
        metrics = {"mae": mae, "mse": mse}
        print(f"MAE {mae:.6f}")
        print(f"MSE {mse:.6f}")
    else:
        m = classification_metrics(pred, test.targets)
        metrics = {k: m[k] for k in ("precision", "recall", "f1", "balanced_accuracy")}
        for k, val in metrics.items():
            print(f"{k} {val:.6f}")
        for w in m["warnings"]:
            print(f"warning: {w}", file=sys.stderr)
    extra = {
        "task": args.task,
        "split": {"train_fraction": split_cfg.train_fraction, "seed": split_cfg.seed, "shuffle": split_cfg.shuffle},
        "final_train_loss": history[-1],
        "test_metrics": metrics,
        "n_train": len(train),
        "n_test": len(test),
    }
    save_checkpoint(args.out, model, config, schema, extra)
    print(f"wrote checkpoint to {args.out}")
    return EXIT_OK


def _parse_group(text: str) -> dict[str, str]:
    key = {}
    for part in text.split(","):
        name, sep, value = part.partition("=")
        if not sep or not name.strip() or not value.strip():
            raise ConfigError(f"--group expects KEY=VALUE[,KEY=VALUE], got {text!r}")
        key[name.strip()] = value.strip()
    return key


def _training_split(data: Dataset, ckpt: dict) -> Dataset:
    s = (ckpt.get("extra") or {}).get("split")
    if not s:
        return data
    train, _ = split(data, SplitConfig(s["train_fraction"], s["seed"], s["shuffle"]))
    return train


def _write(artifact, stem: str, args, meta) -> list[str]:
    out = Path(args.out)
    paths = [out / f"{stem}.json"]
    write_report(artifact, "json", paths[0], meta)
    if args.format != "json":
        paths.append(out / f"{stem}.{args.format}")
        write_report(artifact, args.format, paths[-1], meta)
    return [str(p) for p in paths]


def cmd_explain(args) -> int:
    try:
        model, ckpt = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise OSError(str(exc)) from exc
    if ckpt.get("schema") is None:
        raise ConfigError("checkpoint carries no feature schema")
    schema = FeatureSchema.from_dict(ckpt["schema"])
    if args.method == "attention" and ckpt["kind"] != "attention":
        raise ConfigError(f"--method attention needs an attention checkpoint, got {ckpt['kind']!r}")
    if args.method == "exact" and schema.n_features > SUBSET_CAP:
        raise ConfigError(
            f"{schema.n_features} features exceeds the exact cap of {SUBSET_CAP}; use --method kernel or mc"
        )
    if not 0 <= args.output_index < model.n_outputs:
        raise ConfigError(f"--output-index must lie in [0, {model.n_outputs})")
    if args.background < 1 or args.samples < 1 or args.limit < 1:
        raise ConfigError("--background, --samples and --limit must be positive")
    if args.budget is not None and args.budget < 1:
        raise ConfigError("--budget must be positive")

    data = load_csv(args.data, schema)
    os.makedirs(args.out, exist_ok=True)
    meta = {
        "checkpoint": Path(args.checkpoint).name,
        "data": Path(args.data).name,
        "method": args.method,
        "seed": args.seed,
        "output_index": args.output_index,
    }
    if args.instance is not None:
        if not 0 <= args.instance < len(data):
            raise ConfigError(f"--instance {args.instance} outside 0..{len(data) - 1}")
        selected = data.take([args.instance])
        meta["instance"] = args.instance
    else:
        key = _parse_group(args.group)
        unknown = sorted(set(key) - set(data.groups))
        if unknown:
            raise ConfigError(f"unknown group column(s) {unknown}; data has {sorted(data.groups)}")
        selected = data.select_group(key)
        if len(selected) == 0:
            raise ConfigError(f"no rows match --group {args.group}")
        meta["group"] = key
        meta["limit"] = args.limit

    written = []
    if args.method == "attention":
        order = np.argsort(selected.index, kind="stable")[: args.limit]
        _, summary = extract_attention(model, selected.take(order))
        meta["instances"] = selected.index[order].tolist()
        written += _write(summary, "attention", args, meta)
        gi = importance_from_matrix(summary.mean_weights[None, :], schema.features, "attention")
        written += _write(gi, "global", args, meta)
    else:
        Z = background_rows(_training_split(data, ckpt), args.background, args.seed)
        meta["background"] = int(Z.shape[0])
        if args.method == "kernel":
            meta["budget"] = args.budget if args.budget is not None else min(2**schema.n_features - 2, DEFAULT_BUDGET)
        if args.method == "mc":
            meta["samples"] = args.samples
        estimator = make_estimator(
            args.method, model, Z, budget=args.budget, samples=args.samples, seed=args.seed,
            background_cap=None, feature_names=schema.features,
        )
        if args.instance is not None:
            x = data.rows[args.instance]
            ex = estimator(x)
            written += _write(local_force(ex, args.output_index, args.instance, x), "local", args, meta)
            written += _write(global_importance([ex], args.output_index), "global", args, meta)
        else:
            ge = group_explanations(selected, key, estimator, args.limit, args.output_index)
            written += _write(ge, "group", args, meta)
            written += _write(ge.importance(), "global", args, meta)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_IO


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "explain": cmd_explain, "verify": cmd_verify}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, TooManyPlayersError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DataError) as exc:
        # unreadable or malformed input files
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
