"""Command-line entry point: split, train, evaluate, predict.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
Failures print a single JSON object to stderr so callers can parse them.
Configuration precedence is CLI flag over config file over built-in
default; the config file must at least name the task and learning rate.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, from_dict
from .data import (
    load_records,
    save_records,
    split_manifest,
    stratified_split,
)
from .metrics import format_report
from .reports import plot_confusion_matrix, plot_layer_weights, plot_training_history
from .trainer import TrainConfig, evaluate_records, predict_probabilities, train

# Keys that must be present after merging flags into the config file.
REQUIRED_CONFIG_KEYS = ("task", "learning_rate")
# RunConfig keys that are data paths rather than TrainConfig fields.
PATH_CONFIG_KEYS = ("train_file", "dev_file")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        print(json.dumps({"error": "usage", "message": message}), file=sys.stderr)
        self.exit(2)


def _fail(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _emit(payload: dict) -> None:
    print(json.dumps(payload))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="layermix", description="Layer-mix text classifier pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_split = sub.add_parser("split", parents=[], help="stratified train/dev split of JSONL records")
    p_split.add_argument("--input", action="append", required=True, help="input JSONL file (repeatable)")
    p_split.add_argument("--train-out", required=True)
    p_split.add_argument("--dev-out", required=True)
    p_split.add_argument("--fraction", type=float, default=0.8)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--manifest-out", default=None, help="default: <train-out>.manifest.json")
    p_split.set_defaults(func=cmd_split)

    p_train = sub.add_parser("train", help="train a classifier and write a checkpoint")
    p_train.add_argument("--config", required=True, help="JSON config file")
    p_train.add_argument("--train-file", default=None)
    p_train.add_argument("--dev-file", default=None)
    p_train.add_argument("--out-dir", required=True)
    p_train.add_argument("--task", default=None)
    p_train.add_argument("--learning-rate", type=float, default=None)
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--weight-decay", type=float, default=None)
    p_train.add_argument("--warmup-ratio", type=float, default=None)
    p_train.add_argument("--max-epochs", type=int, default=None)
    p_train.add_argument("--patience", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="score a checkpoint on labeled records")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--batch-size", type=int, default=None, help="default: value stored at train time")
    p_eval.set_defaults(func=cmd_evaluate)

    p_pred = sub.add_parser("predict", help="write per-record label probabilities")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--input", required=True)
    p_pred.add_argument("--output", required=True)
    p_pred.add_argument("--batch-size", type=int, default=None)
    p_pred.set_defaults(func=cmd_predict)
    return parser


def cmd_split(args: argparse.Namespace) -> int:
    records = []
    for path in args.input:
        records.extend(load_records(path))
    train_set, dev_set = stratified_split(records, train_fraction=args.fraction, seed=args.seed)
    save_records(train_set, args.train_out)
    save_records(dev_set, args.dev_out)
    manifest = split_manifest(records, train_set, args.fraction, args.seed)
    manifest_path = args.manifest_out or f"{args.train_out}.manifest.json"
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(
        {
            "train": len(train_set),
            "dev": len(dev_set),
            "train_out": args.train_out,
            "dev_out": args.dev_out,
            "manifest": manifest_path,
        }
    )
    return 0


def _load_run_config(args: argparse.Namespace) -> tuple:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: top level must be a JSON object")
    merged = dict(raw)
    paths = {key: merged.pop(key, None) for key in PATH_CONFIG_KEYS}
    for key in PATH_CONFIG_KEYS:
        flag = getattr(args, key)
        if flag is not None:
            paths[key] = flag
        if paths[key] is None:
            raise ConfigError(f"missing required config key '{key}'")
        if not isinstance(paths[key], str):
            raise ConfigError(f"config key '{key}' expects a string, got {type(paths[key]).__name__}")
    overrides = (
        "task",
        "learning_rate",
        "batch_size",
        "weight_decay",
        "warmup_ratio",
        "max_epochs",
        "patience",
        "seed",
    )
    for key in overrides:
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
    for key in REQUIRED_CONFIG_KEYS:
        if key not in merged:
            raise ConfigError(f"missing required config key '{key}'")
    return from_dict(TrainConfig, merged), paths


def cmd_train(args: argparse.Namespace) -> int:
    config, paths = _load_run_config(args)
    train_records = load_records(paths["train_file"])
    dev_records = load_records(paths["dev_file"])
    result = train(config, train_records, dev_records)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_dir = out_dir / "checkpoint"
    save_checkpoint(checkpoint_dir, result.model, result.label_scheme, config.batch_size)
    with open(out_dir / "history.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.history:
            fh.write(json.dumps(entry) + "\n")
    plot_training_history(result.history, out_dir / "training_history.png")
    plot_layer_weights(result.model.layer_weights(), out_dir / "layer_weights.png")
    _emit(
        {
            "checkpoint": str(checkpoint_dir),
            "epochs_run": result.epochs_run,
            "best_epoch": result.best_epoch,
            "best_dev_loss": result.best_dev_loss,
            "best_dev_accuracy": result.best_report.accuracy,
        }
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    model, scheme, manifest = load_checkpoint(args.checkpoint)
    records = load_records(args.data)
    batch_size = args.batch_size or int(manifest["eval_batch_size"])
    report, loss = evaluate_records(model, records, scheme, batch_size)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload.update(
        {
            "loss": loss,
            "num_examples": len(records),
            "classes": list(scheme.classes),
            "layer_weights": model.layer_weights(),
            "active_ranks": model.active_ranks(),
        }
    )
    (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "metrics.txt").write_text(format_report(report, scheme.classes), encoding="utf-8")
    plot_confusion_matrix(report.confusion, out_dir / "confusion_matrix.png", scheme.classes)
    plot_layer_weights(model.layer_weights(), out_dir / "layer_weights.png")
    _emit({"accuracy": report.accuracy, "micro_f1": report.micro_f1, "out": str(out_dir)})
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model, scheme, manifest = load_checkpoint(args.checkpoint)
    records = load_records(args.input)
    batch_size = args.batch_size or int(manifest["eval_batch_size"])
    probabilities = predict_probabilities(model, records, batch_size)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"layer_weights": model.layer_weights()}) + "\n")
        for record, probs in zip(records, probabilities.tolist()):
            predicted = scheme.classes[max(range(len(probs)), key=probs.__getitem__)]
            fh.write(json.dumps({"id": record.id, "label": predicted, "probabilities": probs}) + "\n")
    _emit({"records": len(records), "output": args.output})
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail("config", str(exc))
        return 2
    except Exception as exc:  # runtime errors become a parseable line, exit 1
        _fail("runtime", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
