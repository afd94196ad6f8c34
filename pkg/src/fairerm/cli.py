"""Command-line toolkit: dataset synthesis, training, cross-validation
with the accuracy-then-fairness selection rule, evaluation, epsilon
sweeps, and standalone preprocessing.

Conventions shared by every command: machine-readable JSON goes to
stdout, human-readable summaries to stderr; every report embeds a run
manifest (command, resolved configuration, seeds, input digests,
version, duration) so runs can be reproduced and diffed.  Exit codes:
0 success, 1 data error, 2 usage error, 3 model did not converge
(artifacts are still written).  A JSON file passed via --config
provides defaults for any flag (command line wins); FAIR_ERM_THREADS
caps the cross-validation worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .data import (ColumnSchema, DataError, Dataset, fit_standardizer,
                   generate_synthetic, load_csv, make_folds, write_csv)
from .preprocess import fit_transform, positive_barycenters
from .validation import (FAMILIES, CvReport, FittedModel, Grid, GridPoint,
                         cross_validate, evaluate, fit_point)

__all__ = ["main"]


class UsageError(Exception):
    """Bad flag combination or value detected after argparse."""


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return value


def _float_list(raw) -> tuple[float, ...]:
    """Accept '0,0.1,0.2', a JSON list, or a python list of numbers."""
    if isinstance(raw, (list, tuple)):
        return tuple(float(x) for x in raw)
    parts = [p.strip() for p in str(raw).split(",") if p.strip()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad number list {raw!r}: {exc}") from None


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(command: str, args: argparse.Namespace, inputs: list,
              started: float) -> dict:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "command")}
    digests = {}
    for path in inputs:
        try:
            digests[str(path)] = _sha256(path)
        except OSError:
            digests[str(path)] = None
    return {
        "command": command,
        "config": config,
        "inputs": digests,
        "version": __version__,
        "duration_seconds": time.monotonic() - started,
    }


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _say(text: str) -> None:
    sys.stderr.write(text + "\n")


def _schema(args: argparse.Namespace) -> ColumnSchema:
    feature_cols = None
    if args.feature_cols:
        feature_cols = tuple(c.strip() for c in str(args.feature_cols).split(",")
                             if c.strip())
    return ColumnSchema(label_col=args.label_col, group_col=args.group_col,
                        feature_cols=feature_cols,
                        include_group_as_feature=args.group_as_feature)


def _add_schema_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--label-col", default="label",
                     help="name of the label column (values in {-1,0,1})")
    sub.add_argument("--group-col", default="group",
                     help="name of the group column")
    sub.add_argument("--feature-cols", default=None,
                     help="comma-separated feature columns "
                          "(default: all remaining)")
    sub.add_argument("--group-as-feature", action="store_true",
                     help="also append the group index as a feature")


def _add_config_flag(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None,
                     help="JSON file with default values for these flags")


def _add_standardize_flags(sub: argparse.ArgumentParser) -> None:
    group = sub.add_mutually_exclusive_group()
    group.add_argument("--standardize", dest="standardize",
                       action="store_true",
                       help="zero-mean unit-variance scaling fitted on the "
                            "training rows (default)")
    group.add_argument("--no-standardize", dest="standardize",
                       action="store_false")
    sub.set_defaults(standardize=True)


def _workers() -> int:
    raw = os.environ.get("FAIR_ERM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"FAIR_ERM_THREADS must be an integer, got {raw!r}")


# --------------------------------------------------------------- commands

def _cmd_synth(args: argparse.Namespace) -> int:
    started = time.monotonic()
    train, test = generate_synthetic(args.seed, args.scale)
    write_csv(train, args.out_train)
    write_csv(test, args.out_test)
    doc = {
        "manifest": _manifest("synth", args, [], started),
        "train": {"path": str(args.out_train), "rows": train.n},
        "test": {"path": str(args.out_test), "rows": test.n},
    }
    _say(f"wrote {train.n} training rows to {args.out_train} and "
         f"{test.n} test rows to {args.out_test}")
    _emit(doc)
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    started = time.monotonic()
    data = load_csv(args.data, _schema(args))
    scaler = fit_standardizer(data) if args.standardize else None
    train_data = scaler.apply(data) if scaler else data
    point = GridPoint(args.c, args.gamma, args.epsilon)
    fitted = fit_point(args.family, train_data, point, tol=args.tol,
                       max_passes=args.max_passes)
    if scaler is not None:
        fitted = FittedModel(fitted.family, fitted.point, fitted.model,
                             fitted.transform, scaler)
    model_doc = {"artifact": "model", **fitted.to_json_dict()}
    with open(args.out_model, "w", encoding="utf-8") as fh:
        json.dump(model_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report = evaluate(fitted, data)
    doc = {
        "manifest": _manifest("train", args, [args.data], started),
        "model_path": str(args.out_model),
        "converged": fitted.converged,
        "report": report,
    }
    deo_text = "n/a" if report["deo"] is None else f"{report['deo']:.4f}"
    _say(f"{args.family}: train accuracy {report['accuracy']:.4f}, "
         f"DEO {deo_text}, model -> {args.out_model}")
    _emit(doc)
    return 0 if fitted.converged else 3


def _grid_from_args(args: argparse.Namespace) -> Grid:
    c_values = (_float_list(args.c_values) if args.c_values
                else Grid().c_values)
    gammas = _float_list(args.gamma_values) if args.gamma_values else ()
    epsilons = (_float_list(args.epsilon_values) if args.epsilon_values
                else (0.0,))
    return Grid(c_values=c_values, gamma_values=gammas,
                epsilon_values=epsilons)


def _cmd_cv(args: argparse.Namespace) -> int:
    started = time.monotonic()
    data = load_csv(args.data, _schema(args))
    grid = _grid_from_args(args)
    ratio = 1.0 if args.naive else 0.9
    workers = _workers()
    reports: list[CvReport] = []
    for r in range(args.repeats):
        plan = make_folds(data.n, args.folds, args.seed + r)
        reports.append(cross_validate(
            data, grid, args.family, plan, standardize=args.standardize,
            threshold_ratio=ratio, tol=args.tol, max_passes=args.max_passes,
            workers=workers))

    selected_accs = [rep.selected["mean_accuracy"] for rep in reports]
    selected_deos = [rep.selected["mean_deo"] for rep in reports
                     if rep.selected["mean_deo"] is not None]
    summary = {
        "selected_points": [rep.selected["params"] for rep in reports],
        "selected_mean_accuracy": float(np.mean(selected_accs)),
        "selected_accuracy_std": float(np.std(selected_accs)),
        "selected_mean_deo": (float(np.mean(selected_deos))
                              if selected_deos else None),
        "selected_deo_std": (float(np.std(selected_deos))
                             if selected_deos else None),
    }
    doc = {
        "manifest": _manifest("cv", args, [args.data], started),
        "repeats": [rep.to_json_dict() for rep in reports],
        "summary": summary,
    }
    with open(args.out_report, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = args.out_csv or os.fspath(args.out_report) + ".csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        if args.repeats == 1:
            fh.write(reports[0].to_csv_text())
        else:
            for r, rep in enumerate(reports):
                text = rep.to_csv_text()
                lines = text.splitlines()
                if r == 0:
                    fh.write("repeat," + lines[0] + "\n")
                for line in lines[1:]:
                    fh.write(f"{r}," + line + "\n")

    sel = reports[0].selected
    gamma = sel["params"]["gamma"]
    deo_text = ("n/a" if sel["mean_deo"] is None
                else f"{sel['mean_deo']:.4f}")
    _say(f"selected C={sel['params']['C']:g}"
         + (f" gamma={gamma:g}" if gamma is not None else "")
         + f" epsilon={sel['params']['epsilon']:g}: "
           f"mean accuracy {sel['mean_accuracy']:.4f}, mean DEO {deo_text}")
    _say(f"report -> {args.out_report}, table -> {csv_path}")
    _emit(doc)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    started = time.monotonic()
    with open(args.model, "r", encoding="utf-8") as fh:
        model_doc = json.load(fh)
    fitted = FittedModel.from_json_dict(model_doc)
    data = load_csv(args.data, _schema(args))
    report = evaluate(fitted, data)
    doc = {
        "manifest": _manifest("eval", args, [args.model, args.data], started),
        "report": report,
    }
    deo_text = "n/a" if report["deo"] is None else f"{report['deo']:.4f}"
    _say(f"accuracy {report['accuracy']:.4f}, DEO {deo_text}")
    _emit(doc)
    return 0


def _cmd_sweep_epsilon(args: argparse.Namespace) -> int:
    started = time.monotonic()
    data = load_csv(args.data, _schema(args))
    eval_data = data
    inputs = [args.data]
    if args.test_data:
        eval_data = load_csv(args.test_data, _schema(args))
        inputs.append(args.test_data)
    epsilons = _float_list(args.epsilons)
    if any(e < 0 for e in epsilons):
        raise UsageError("epsilon values must be non-negative")
    scaler = fit_standardizer(data) if args.standardize else None
    train_data = scaler.apply(data) if scaler else data

    rows = []
    all_converged = True
    for eps in epsilons:
        fitted = fit_point("fair-svm", train_data,
                           GridPoint(args.c, args.gamma, eps),
                           tol=args.tol, max_passes=args.max_passes)
        if scaler is not None:
            fitted = FittedModel(fitted.family, fitted.point, fitted.model,
                                 fitted.transform, scaler)
        all_converged = all_converged and fitted.converged
        report = evaluate(fitted, eval_data)
        rows.append({"epsilon": eps, "accuracy": report["accuracy"],
                     "deo": report["deo"]})

    with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write("epsilon,accuracy,deo\n")
        for row in rows:
            deo_cell = "" if row["deo"] is None else f"{row['deo']:.17g}"
            fh.write(f"{row['epsilon']:.17g},{row['accuracy']:.17g},"
                     f"{deo_cell}\n")

    doc = {
        "manifest": _manifest("sweep-epsilon", args, inputs, started),
        "rows": rows,
        "out_csv": str(args.out_csv),
    }
    _say(f"swept {len(rows)} epsilon values -> {args.out_csv}")
    _emit(doc)
    return 0 if all_converged else 3


def _cmd_preprocess(args: argparse.Namespace) -> int:
    started = time.monotonic()
    data = load_csv(args.data, _schema(args))
    kind = "projection" if args.multi_group else "drop_feature"
    transform, transformed = fit_transform(data, kind)
    write_csv(transformed, args.out_data,
              label_col=args.label_col, group_col=args.group_col)
    with open(args.out_transform, "w", encoding="utf-8") as fh:
        json.dump({"artifact": "transform", **transform.to_json_dict()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    doc = {
        "manifest": _manifest("preprocess", args, [args.data], started),
        "kind": kind,
        "rows": transformed.n,
        "output_features": transformed.dim,
        "out_data": str(args.out_data),
        "out_transform": str(args.out_transform),
    }
    if args.verify:
        bary = positive_barycenters(transformed)
        worst = 0.0
        for g in range(bary.shape[0]):
            for h in range(g + 1, bary.shape[0]):
                worst = max(worst, float(np.max(np.abs(bary[g] - bary[h]))))
        doc["verify"] = {"max_barycenter_gap": worst, "ok": worst <= 1e-10}
        if worst > 1e-10:
            _say(f"verification failed: residual barycenter gap {worst:g}")
            _emit(doc)
            return 1
    _say(f"wrote {transformed.n} rows with {transformed.dim} features "
         f"to {args.out_data}")
    _emit(doc)
    return 0


# ---------------------------------------------------------------- parser

def _build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="fairerm",
        description="Train and validate classifiers under an "
                    "equal-opportunity constraint.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict = {}

    sub = subs.add_parser("synth", help="generate the synthetic benchmark")
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--scale", type=_positive_float, default=1.0,
                     help="cluster size multiplier (default 1.0)")
    sub.add_argument("--out-train", required=True)
    sub.add_argument("--out-test", required=True)
    _add_config_flag(sub)
    sub.set_defaults(func=_cmd_synth)
    registry["synth"] = sub

    sub = subs.add_parser("train", help="train one model")
    sub.add_argument("--data", required=True)
    _add_schema_flags(sub)
    sub.add_argument("--family", choices=FAMILIES, default="fair-svm")
    sub.add_argument("--c", type=_positive_float, default=1.0,
                     help="box bound C; l1 penalty for the lasso families")
    sub.add_argument("--gamma", type=_positive_float, default=None,
                     help="rbf kernel width; omit for the linear kernel")
    sub.add_argument("--epsilon", type=_nonneg_float, default=0.0,
                     help="fairness slack bound (fair-svm only)")
    sub.add_argument("--tol", type=_positive_float, default=None)
    sub.add_argument("--max-passes", type=_positive_int, default=None)
    _add_standardize_flags(sub)
    sub.add_argument("--out-model", required=True)
    _add_config_flag(sub)
    sub.set_defaults(func=_cmd_train)
    registry["train"] = sub

    sub = subs.add_parser("cv", help="cross-validate a hyperparameter grid")
    sub.add_argument("--data", required=True)
    _add_schema_flags(sub)
    sub.add_argument("--family", choices=FAMILIES, default="fair-svm")
    sub.add_argument("--c-values", default=None,
                     help="comma-separated C grid (default: 30 values, "
                          "log-spaced 1e-4..1e4)")
    sub.add_argument("--gamma-values", default=None,
                     help="comma-separated gamma grid (default: none, "
                          "linear kernel)")
    sub.add_argument("--epsilon-values", default=None,
                     help="comma-separated epsilon grid (default: 0)")
    sub.add_argument("--folds", type=_positive_int, default=10)
    sub.add_argument("--seed", type=int, required=True,
                     help="seed for the fold assignment")
    sub.add_argument("--repeats", type=_positive_int, default=1,
                     help="repeat CV with reseeded folds this many times")
    sub.add_argument("--naive", action="store_true",
                     help="select on accuracy alone (shortlist ratio 1.0)")
    sub.add_argument("--tol", type=_positive_float, default=None)
    sub.add_argument("--max-passes", type=_positive_int, default=None)
    _add_standardize_flags(sub)
    sub.add_argument("--out-report", required=True,
                     help="path for the JSON report")
    sub.add_argument("--out-csv", default=None,
                     help="path for the per-grid-point CSV "
                          "(default: report path + .csv)")
    _add_config_flag(sub)
    sub.set_defaults(func=_cmd_cv)
    registry["cv"] = sub

    sub = subs.add_parser("eval", help="evaluate a saved model on a dataset")
    sub.add_argument("--model", required=True)
    sub.add_argument("--data", required=True)
    _add_schema_flags(sub)
    _add_config_flag(sub)
    sub.set_defaults(func=_cmd_eval)
    registry["eval"] = sub

    sub = subs.add_parser("sweep-epsilon",
                          help="train fair-svm across an epsilon list")
    sub.add_argument("--data", required=True)
    _add_schema_flags(sub)
    sub.add_argument("--epsilons", default="0,0.01,0.1,0.2,0.3",
                     help="comma-separated epsilon values")
    sub.add_argument("--c", type=_positive_float, default=1.0)
    sub.add_argument("--gamma", type=_positive_float, default=None)
    sub.add_argument("--test-data", default=None,
                     help="evaluate on this file instead of the training data")
    sub.add_argument("--tol", type=_positive_float, default=None)
    sub.add_argument("--max-passes", type=_positive_int, default=None)
    _add_standardize_flags(sub)
    sub.add_argument("--out-csv", required=True)
    _add_config_flag(sub)
    sub.set_defaults(func=_cmd_sweep_epsilon)
    registry["sweep-epsilon"] = sub

    sub = subs.add_parser("preprocess",
                          help="fit and apply the fairness transform")
    sub.add_argument("--data", required=True)
    _add_schema_flags(sub)
    sub.add_argument("--multi-group", action="store_true",
                     help="use the projection transform (any group count) "
                          "instead of pivot elimination")
    sub.add_argument("--verify", action="store_true",
                     help="recompute output barycenters and check they agree")
    sub.add_argument("--out-data", required=True)
    sub.add_argument("--out-transform", required=True)
    _add_config_flag(sub)
    sub.set_defaults(func=_cmd_preprocess)
    registry["preprocess"] = sub

    return parser, registry


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, registry = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            _say(f"error: cannot read config {args.config}: {exc}")
            return 2
        known = set(vars(args))
        unknown = set(file_cfg) - known
        if unknown:
            _say(f"error: config keys do not match any flag: "
                 f"{', '.join(sorted(unknown))}")
            return 2
        registry[args.command].set_defaults(**file_cfg)
        args = parser.parse_args(argv)  # command line overrides the file
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"error: {exc}")
        return 2
    except (DataError, OSError, ValueError) as exc:
        _say(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
