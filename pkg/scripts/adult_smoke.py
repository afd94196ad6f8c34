#!/usr/bin/env python3
"""Smoke check on a user-supplied census-style CSV.

Runs the cross-validated selection twice on the training file, once for the
fairness-constrained linear SVM and once for the plain one, refits both
winners, and compares their equal-opportunity gaps on the test file. Exits 0
when the constrained model's gap is no larger than the plain model's.

The files must be numeric CSVs with a binary +/-1 label column and a group
column; categorical attributes should be one-hot encoded beforehand.

Example:
    python3 scripts/adult_smoke.py --train adult_train.csv \
        --test adult_test.csv --label income --group sex
"""
from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

import fairerm as fe


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--train", required=True, help="training CSV path")
    parser.add_argument("--test", required=True, help="held-out CSV path")
    parser.add_argument("--label", default="label", help="label column name")
    parser.add_argument("--group", default="group", help="group column name")
    parser.add_argument("--folds", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--c-values", type=int, default=15,
                        help="size of the log-spaced C grid")
    args = parser.parse_args(argv)
    if args.folds < 2:
        parser.error("--folds must be at least 2")
    if args.c_values < 1:
        parser.error("--c-values must be at least 1")
    return args


def run(args) -> int:
    schema = fe.ColumnSchema(label_col=args.label, group_col=args.group)
    train = fe.load_csv(args.train, schema)
    test = fe.load_csv(args.test, schema)

    scaler = fe.fit_standardizer(train)
    train = scaler.apply(train)
    test = scaler.apply(test)

    grid = fe.Grid(c_values=tuple(np.logspace(-4, 4, args.c_values)))
    plan = fe.make_folds(train.n, args.folds, args.seed)

    results = {}
    for family, ratio in (("fair-svm", 0.9), ("svm", 1.0)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = fe.cross_validate(train, grid, family, plan,
                                       threshold_ratio=ratio)
            fitted = fe.fit_point(family, train, report.selected_point)
        scores = fitted.decision_values(test.features)
        try:
            gap = fe.deo(scores, test)
        except ValueError:
            print("a group has no positive test rows; "
                  "gap comparison undefined")
            return 1
        results[family] = {
            "C": report.selected_point.c,
            "accuracy": fe.accuracy(scores, test),
            "deo": gap,
        }
        print(f"{family:>8}: C={results[family]['C']:.4g} "
              f"test accuracy={results[family]['accuracy']:.4f} "
              f"test DEO={results[family]['deo']:.4f}")

    fair_gap = results["fair-svm"]["deo"]
    plain_gap = results["svm"]["deo"]
    if fair_gap <= plain_gap:
        print(f"OK: constrained gap {fair_gap:.4f} <= plain gap "
              f"{plain_gap:.4f}")
        return 0
    print(f"REGRESSION: constrained gap {fair_gap:.4f} > plain gap "
          f"{plain_gap:.4f}")
    return 1


def main(argv=None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
