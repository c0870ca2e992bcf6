"""Command line surface: train, predict, evaluate, importance, and the
positive-ratio benchmark sweep.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or configuration
error (argparse uses 2 on its own for bad flags).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import (
    DataError,
    SchemaError,
    apply_normalize,
    fit_normalize,
    load_csv,
    schema_from_json,
    split,
    undersample_majority,
)
from .ensemble import ensemble_scores, init_model, predict_labels_from_scores
from .importance import permutation_importance
from .metrics import metrics_report, roc_curve
from .model_io import ModelFileError, load_model, save_model, write_trace
from .trainer import PDSCAConfig, SGDConfig, TrainingDivergedError, train_pdsca, train_sgd

USAGE_ERRORS = (SchemaError, DataError, ModelFileError, FileNotFoundError,
                IsADirectoryError, NotADirectoryError, json.JSONDecodeError)


def _add_common_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--optimizer", choices=["sgd", "pdsca"], default="sgd")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--trees", type=int, default=40)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--lambda1", type=float, default=0.1)
    p.add_argument("--lambda2", type=float, default=0.005)
    p.add_argument("--learning-rate", type=float, default=0.01, help="SGD step size")
    p.add_argument("--eta1", type=float, default=0.1)
    p.add_argument("--eta2", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.001)
    p.add_argument("--beta0", type=float, default=0.9)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--g0", type=float, default=1e-8)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--decay-epochs", default="",
                   help="comma-separated epochs at which eta1/eta2 decay")
    p.add_argument("--decay-factor", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--positive-label", default=None,
                   help="raw target value to map to +1 (default: minority class)")


def _sgd_config(args) -> SGDConfig:
    return SGDConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, lam1=args.lambda1, lam2=args.lambda2,
        seed=args.seed,
    )


def _pdsca_config(args) -> PDSCAConfig:
    decay = tuple(int(e) for e in args.decay_epochs.split(",") if e)
    return PDSCAConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        beta=args.beta, beta0=args.beta0, beta1=args.beta1, beta2=args.beta2,
        g0=args.g0, eta1=args.eta1, eta2=args.eta2, margin=args.margin,
        lam1=args.lambda1, lam2=args.lambda2, weight_decay=args.weight_decay,
        seed=args.seed, decay_epochs=decay, decay_factor=args.decay_factor,
    )


def _config_echo(args, ds) -> dict:
    keys = ("optimizer", "epochs", "batch_size", "trees", "depth", "layers",
            "lambda1", "lambda2", "learning_rate", "eta1", "eta2", "beta",
            "beta0", "beta1", "beta2", "g0", "margin", "weight_decay",
            "seed", "test_fraction")
    echo = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    echo["positive_value"] = ds.positive_value
    echo["pos_ratio"] = ds.pos_ratio
    return echo


def _load_and_prepare(args):
    schema = schema_from_json(args.schema)
    ds = load_csv(args.data, schema, positive_label=args.positive_label)
    return schema, ds


def cmd_train(args) -> int:
    schema, ds = _load_and_prepare(args)
    train_ds, test_ds = split(ds, args.test_fraction, args.seed)
    stats = fit_normalize(train_ds)
    train_n = apply_normalize(train_ds, stats)
    test_n = apply_normalize(test_ds, stats)

    model = init_model(args.trees, args.depth, args.layers, train_n.n_features,
                       seed=args.seed, feature_names=train_n.feature_names)
    head = None
    if args.optimizer == "sgd":
        model, trace = train_sgd(model, train_n, _sgd_config(args), val=test_n)
    else:
        model, head, trace = train_pdsca(model, train_n, _pdsca_config(args), val=test_n)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.json", model, schema, stats, head=head,
               config=_config_echo(args, ds))
    write_trace(out / "trace.jsonl", trace)
    report = metrics_report(ensemble_scores(model, test_n.features), test_n.labels)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"model written to {out / 'model.json'}  test auc {report['auc']:.6f}")
    return 0


def _load_for_model(model_path, data_path, require_binary: bool):
    model, schema, stats, head_doc, config = load_model(model_path)
    ds = load_csv(data_path, schema,
                  positive_label=config.get("positive_value"),
                  require_binary_target=require_binary)
    ds = apply_normalize(ds, stats)
    return model, ds, head_doc, config


def cmd_predict(args) -> int:
    model, ds, _, _ = _load_for_model(args.model, args.data, require_binary=False)
    if len(ds) > 0:
        raw = ensemble_scores(model, ds.features)
        squashed = expit(raw)
        labels = predict_labels_from_scores(raw)
    else:
        raw = squashed = labels = np.empty(0)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["raw_score", "squashed_score", "label"])
        for r, s, l in zip(raw, squashed, labels):
            writer.writerow([repr(float(r)), repr(float(s)), int(l)])
    print(f"wrote {len(ds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model, ds, _, _ = _load_for_model(args.model, args.data, require_binary=True)
    scores = ensemble_scores(model, ds.features)
    report = metrics_report(scores, ds.labels)
    with open(args.out_metrics, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    roc_curve(scores, ds.labels).write_csv(args.out_roc)
    print(f"auc {report['auc']:.6f}  h_measure {report['h_measure']:.6f}")
    return 0


def cmd_importance(args) -> int:
    model, ds, _, _ = _load_for_model(args.model, args.data, require_binary=True)
    workers = int(os.environ.get("DBDT_THREADS", "1"))
    report = permutation_importance(model, ds, repeats=args.repeats,
                                    seed=args.seed, workers=workers)
    report.to_json(args.out)
    table = report.to_table()
    if args.table:
        with open(args.table, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
    print(table)
    return 0


def cmd_benchmark_ratio(args) -> int:
    schema, ds = _load_and_prepare(args)
    ratios = []
    for token in args.ratios.split(","):
        token = token.strip()
        if token == "original":
            ratios.append("original")
        else:
            r = float(token)
            if r < ds.pos_ratio:
                raise SchemaError(
                    f"infeasible ratio {r}: below the data's positive ratio {ds.pos_ratio:.4f}"
                )
            ratios.append(r)

    rows = []
    for ratio in ratios:
        sub = ds if ratio == "original" else undersample_majority(ds, ratio, args.seed)
        train_ds, test_ds = split(sub, args.test_fraction, args.seed)
        stats = fit_normalize(train_ds)
        train_n = apply_normalize(train_ds, stats)
        test_n = apply_normalize(test_ds, stats)
        base = init_model(args.trees, args.depth, args.layers, train_n.n_features,
                          seed=args.seed, feature_names=train_n.feature_names)
        _, sgd_trace = train_sgd(copy.deepcopy(base), train_n, _sgd_config(args),
                                 val=test_n)
        _, _, pdsca_trace = train_pdsca(copy.deepcopy(base), train_n,
                                        _pdsca_config(args), val=test_n)
        for optimizer, trace in (("sgd", sgd_trace), ("pdsca", pdsca_trace)):
            for rec in trace:
                if "val_auc" in rec:
                    rows.append((ratio, optimizer, rec["epoch"], rec["val_auc"]))

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ratio", "optimizer", "epoch", "test_auc"])
        for ratio, optimizer, epoch, test_auc in rows:
            writer.writerow([ratio, optimizer, epoch, repr(float(test_auc))])
    print(f"wrote {len(rows)} trace rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbdt",
        description="Soft-tree gradient boosting with compositional AUC maximization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write artifacts")
    _add_common_train_flags(p_train)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="score a CSV with a saved model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--out", required=True, help="output scores CSV")
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="metrics report and ROC export")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out-metrics", required=True)
    p_eval.add_argument("--out-roc", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_imp = sub.add_parser("importance", help="permutation feature importance")
    p_imp.add_argument("--model", required=True)
    p_imp.add_argument("--data", required=True)
    p_imp.add_argument("--repeats", type=int, default=10)
    p_imp.add_argument("--seed", type=int, default=0)
    p_imp.add_argument("--out", required=True, help="output report JSON")
    p_imp.add_argument("--table", default=None, help="optional text table path")
    p_imp.set_defaults(func=cmd_importance)

    p_bench = sub.add_parser("benchmark-ratio",
                             help="positive-ratio sweep comparing both optimizers")
    _add_common_train_flags(p_bench)
    p_bench.add_argument("--ratios", required=True,
                         help="comma-separated ratios, e.g. original,0.5,0.75")
    p_bench.add_argument("--out", required=True, help="output trace CSV")
    p_bench.set_defaults(func=cmd_benchmark_ratio)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
