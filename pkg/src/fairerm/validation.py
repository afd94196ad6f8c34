"""Hyperparameter grids, k-fold cross-validation, and the two-step
accuracy-then-fairness model selection rule.

Selection works in two steps: every grid point whose mean CV accuracy
reaches 90% of the best mean accuracy is shortlisted, and the
shortlisted point with the lowest mean DEO wins.  Setting the shortlist
ratio to 1.0 degenerates to plain accuracy selection (the naive rule).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SplitPlan, Standardizer, fit_standardizer
from .fairness import (accuracy, deo, delta_hat, group_true_positive_rates,
                       linear_gap)
from .kernels import KernelSpec
from .lasso import LassoConfig, train_fair_lasso, train_lasso
from .preprocess import FairTransform
from .solver import (FairSvmModel, LinearModel, SvmConfig, train_fair_svm,
                     train_svm_unconstrained)

__all__ = [
    "FAMILIES",
    "Grid",
    "GridPoint",
    "FittedModel",
    "CvReport",
    "fit_point",
    "evaluate",
    "cross_validate",
    "select_nvp",
]

FAMILIES = ("fair-svm", "svm", "lasso", "fair-lasso")

DEFAULT_GAMMAS = (0.001, 0.01, 0.1, 1.0)


def _default_c_values() -> tuple[float, ...]:
    return tuple(float(c) for c in np.logspace(-4.0, 4.0, 30))


@dataclass(frozen=True)
class GridPoint:
    """One hyperparameter combination.  gamma None means linear kernel.

    For the lasso families, c carries the l1 penalty weight."""

    c: float
    gamma: float | None
    epsilon: float

    def sort_key(self) -> tuple:
        return (self.c, -math.inf if self.gamma is None else self.gamma,
                self.epsilon)

    def to_json_dict(self) -> dict:
        return {"C": self.c, "gamma": self.gamma, "epsilon": self.epsilon}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GridPoint":
        return cls(float(doc["C"]),
                   None if doc.get("gamma") is None else float(doc["gamma"]),
                   float(doc.get("epsilon", 0.0)))


@dataclass(frozen=True)
class Grid:
    """Cartesian hyperparameter grid.

    Defaults follow the standard protocol: 30 C values log-spaced over
    [1e-4, 1e4], gamma in {0.001, 0.01, 0.1, 1} for the rbf kernel (an
    empty gamma list means linear kernel), epsilon fixed at 0.
    """

    c_values: tuple[float, ...] = field(default_factory=_default_c_values)
    gamma_values: tuple[float, ...] = ()
    epsilon_values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        cs = tuple(float(c) for c in self.c_values)
        gs = tuple(float(g) for g in self.gamma_values)
        es = tuple(float(e) for e in self.epsilon_values)
        if not cs:
            raise ValueError("grid needs at least one C value")
        if any(c <= 0 for c in cs):
            raise ValueError("C values must be positive")
        if any(g <= 0 for g in gs):
            raise ValueError("gamma values must be positive")
        if not es:
            raise ValueError("grid needs at least one epsilon value")
        if any(e < 0 for e in es):
            raise ValueError("epsilon values must be non-negative")
        object.__setattr__(self, "c_values", cs)
        object.__setattr__(self, "gamma_values", gs)
        object.__setattr__(self, "epsilon_values", es)

    @classmethod
    def default_rbf(cls) -> "Grid":
        return cls(gamma_values=DEFAULT_GAMMAS)

    def points(self) -> tuple[GridPoint, ...]:
        gammas: tuple[float | None, ...] = self.gamma_values or (None,)
        return tuple(GridPoint(c, g, e)
                     for c in self.c_values
                     for g in gammas
                     for e in self.epsilon_values)

    def to_json_dict(self) -> dict:
        return {"C_values": list(self.c_values),
                "gamma_values": list(self.gamma_values),
                "epsilon_values": list(self.epsilon_values)}


@dataclass(frozen=True)
class FittedModel:
    """A trained predictor plus the preprocessing it was trained behind.

    decision_values feeds raw inputs through the optional standardizer,
    then the optional fairness transform, then the model.
    """

    family: str
    point: GridPoint
    model: FairSvmModel | LinearModel
    transform: FairTransform | None = None
    scaler: Standardizer | None = None

    def decision_values(self, features: np.ndarray) -> np.ndarray:
        feats = np.asarray(features, dtype=np.float64)
        if self.scaler is not None:
            feats = self.scaler.transform(feats)
        if self.transform is not None:
            feats = self.transform.transform(feats)
        return self.model.decision_values(feats)

    @property
    def converged(self) -> bool:
        return bool(self.model.converged)

    def to_json_dict(self) -> dict:
        doc = {
            "family": self.family,
            "point": self.point.to_json_dict(),
            "model": self.model.to_json_dict(),
            "transform": (None if self.transform is None
                          else self.transform.to_json_dict()),
            "scaler": (None if self.scaler is None
                       else self.scaler.to_json_dict()),
        }
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FittedModel":
        model_doc = doc["model"]
        if model_doc["family"] == "svm":
            model = FairSvmModel.from_json_dict(model_doc)
        else:
            model = LinearModel.from_json_dict(model_doc)
        transform = (None if doc.get("transform") is None
                     else FairTransform.from_json_dict(doc["transform"]))
        scaler = (None if doc.get("scaler") is None
                  else Standardizer.from_json_dict(doc["scaler"]))
        return cls(doc["family"], GridPoint.from_json_dict(doc["point"]),
                   model, transform, scaler)


def fit_point(family: str, data: Dataset, point: GridPoint, *,
              tol: float | None = None,
              max_passes: int | None = None) -> FittedModel:
    """Train one model of the given family at one grid point.

    The caller standardizes beforehand if desired; the returned wrapper
    carries no scaler.  Lasso families read the l1 penalty from point.c
    and require an empty gamma axis.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    if family in ("lasso", "fair-lasso"):
        if point.gamma is not None:
            raise ValueError("lasso families fit linear models; the gamma "
                             "axis must be empty")
        cfg = LassoConfig(lam=point.c, tol=tol if tol is not None else 1e-8,
                          max_sweeps=max_passes if max_passes else 10000)
        if family == "lasso":
            return FittedModel(family, point, train_lasso(data, cfg))
        transform, model = train_fair_lasso(data, cfg)
        return FittedModel(family, point, model, transform=transform)

    kernel = (KernelSpec("linear") if point.gamma is None
              else KernelSpec("rbf", point.gamma))
    cfg = SvmConfig(C=point.c,
                    epsilon=point.epsilon if family == "fair-svm" else 0.0,
                    kernel=kernel, tol=tol if tol is not None else 1e-6,
                    max_passes=max_passes)
    if family == "fair-svm":
        return FittedModel(family, point, train_fair_svm(data, cfg))
    return FittedModel(family, point, train_svm_unconstrained(data, cfg))


def evaluate(model, test: Dataset) -> dict:
    """Accuracy plus fairness metrics of any scorer on a dataset.

    When some group has no positive-labeled rows the group-conditional
    metrics are undefined and reported as None, with deo_defined False.
    """
    scores = model.decision_values(test.features)
    report: dict = {"accuracy": accuracy(scores, test)}
    have_positives = all(test.positive_indices(g).size
                         for g in range(test.n_groups))
    if have_positives:
        rates = group_true_positive_rates(scores, test)
        report.update({
            "deo": deo(scores, test),
            "linear_gap": linear_gap(scores, test),
            "delta_hat": delta_hat(scores, test),
            "tpr_by_group": {name: float(rates[g])
                             for g, name in enumerate(test.group_names)},
            "deo_defined": True,
        })
    else:
        tprs = {}
        for g, name in enumerate(test.group_names):
            idx = test.positive_indices(g)
            tprs[name] = (float(np.mean(scores[idx] > 0)) if idx.size
                          else None)
        report.update({"deo": None, "linear_gap": None, "delta_hat": None,
                       "tpr_by_group": tprs, "deo_defined": False})
    return report


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def select_nvp(rows, threshold_ratio: float = 0.9) -> dict:
    """Two-step selection over CV rows; returns the winning row.

    Step one keeps rows whose mean_accuracy is at least threshold_ratio
    times the best mean_accuracy; step two picks the kept row with the
    lowest mean_deo.  Remaining ties fall to smallest C, then gamma,
    then epsilon, so the outcome does not depend on row order.  Rows
    whose DEO was undefined on every fold lose every DEO comparison.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to select from")
    return rows[_select_index(rows, threshold_ratio)]


def _row_point(row: dict) -> GridPoint:
    return GridPoint.from_json_dict(row["params"])


def _select_index(rows: list[dict], threshold_ratio: float) -> int:
    best_acc = max(row["mean_accuracy"] for row in rows)
    threshold = threshold_ratio * best_acc
    shortlist = [i for i, row in enumerate(rows)
                 if row["mean_accuracy"] >= threshold]

    def key(i: int):
        row = rows[i]
        d = row["mean_deo"]
        return ((d if d is not None else math.inf),) + _row_point(row).sort_key()

    return min(shortlist, key=key)


@dataclass(frozen=True)
class CvReport:
    """Per-grid-point CV aggregates plus the selection outcome.

    rows[i] holds params, per-fold accuracies and DEOs (None where a
    fold had no positives for some group), their means and population
    standard deviations, and the count of DEO-defined folds.
    """

    family: str
    fold_count: int
    plan_seed: int
    threshold_ratio: float
    rows: tuple[dict, ...]
    selected_index: int
    selection: dict

    @property
    def selected(self) -> dict:
        return self.rows[self.selected_index]

    @property
    def selected_point(self) -> GridPoint:
        return _row_point(self.selected)

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "fold_count": self.fold_count,
            "plan_seed": self.plan_seed,
            "threshold_ratio": self.threshold_ratio,
            "rows": list(self.rows),
            "selected_index": self.selected_index,
            "selected": self.selected,
            "selection": self.selection,
        }

    def to_csv_text(self) -> str:
        """One row per grid point, for external plotting."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["C", "gamma", "epsilon", "mean_accuracy",
                         "accuracy_std", "mean_deo", "deo_std",
                         "deo_defined_folds", "selected"])
        for i, row in enumerate(self.rows):
            p = row["params"]
            writer.writerow([
                f"{p['C']:.17g}",
                "" if p["gamma"] is None else f"{p['gamma']:.17g}",
                f"{p['epsilon']:.17g}",
                f"{row['mean_accuracy']:.17g}",
                f"{row['accuracy_std']:.17g}",
                "" if row["mean_deo"] is None else f"{row['mean_deo']:.17g}",
                "" if row["deo_std"] is None else f"{row['deo_std']:.17g}",
                row["deo_defined_folds"],
                int(i == self.selected_index),
            ])
        return buf.getvalue()


def _fold_task(data: Dataset, plan: SplitPlan, family: str, point: GridPoint,
               fold: int, standardize: bool, tol: float | None,
               max_passes: int | None) -> tuple[float, float | None]:
    train_part = data.subset(plan.complement_indices(fold))
    eval_part = data.subset(plan.fold_indices(fold))
    scaler = None
    if standardize:
        scaler = fit_standardizer(train_part)
        train_part = scaler.apply(train_part)
    fitted = fit_point(family, train_part, point, tol=tol,
                       max_passes=max_passes)
    if scaler is not None:
        fitted = FittedModel(fitted.family, fitted.point, fitted.model,
                             fitted.transform, scaler)
    report = evaluate(fitted, eval_part)
    return report["accuracy"], report["deo"]


def cross_validate(data: Dataset, grid: Grid, family: str, plan: SplitPlan, *,
                   standardize: bool = False, threshold_ratio: float = 0.9,
                   tol: float | None = None, max_passes: int | None = None,
                   workers: int = 1) -> CvReport:
    """Evaluate every grid point across the folds of the plan and select.

    A pure function of its arguments: fold tasks may run on a thread
    pool, but results are reduced in (grid point, fold) order.  Folds
    where a group has no positive rows contribute accuracy but leave
    DEO undefined; a grid point's mean DEO averages the defined folds.
    Standardization, when on, is refit on each fold's training part.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    if plan.n != data.n:
        raise ValueError(f"plan covers {plan.n} rows, data has {data.n}")
    points = grid.points()
    tasks = [(pi, fold) for pi in range(len(points))
             for fold in range(plan.fold_count)]

    def run(task: tuple[int, int]) -> tuple[float, float | None]:
        pi, fold = task
        return _fold_task(data, plan, family, points[pi], fold, standardize,
                          tol, max_passes)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, tasks))
    else:
        outcomes = [run(task) for task in tasks]

    results = dict(zip(tasks, outcomes))
    rows = []
    for pi, point in enumerate(points):
        accs = [results[(pi, fold)][0] for fold in range(plan.fold_count)]
        deos = [results[(pi, fold)][1] for fold in range(plan.fold_count)]
        defined = [d for d in deos if d is not None]
        mean_acc, std_acc = _mean_std(accs)
        row = {
            "params": point.to_json_dict(),
            "mean_accuracy": mean_acc,
            "accuracy_std": std_acc,
            "fold_accuracies": accs,
            "fold_deos": deos,
            "deo_defined_folds": len(defined),
        }
        if defined:
            row["mean_deo"], row["deo_std"] = _mean_std(defined)
        else:
            row["mean_deo"], row["deo_std"] = None, None
        rows.append(row)

    selected_index = _select_index(rows, threshold_ratio)
    best_acc = max(row["mean_accuracy"] for row in rows)
    selection = {
        "best_mean_accuracy": best_acc,
        "threshold_ratio": threshold_ratio,
        "threshold": threshold_ratio * best_acc,
        "shortlist": [i for i, row in enumerate(rows)
                      if row["mean_accuracy"] >= threshold_ratio * best_acc],
    }
    return CvReport(family=family, fold_count=plan.fold_count,
                    plan_seed=plan.seed, threshold_ratio=threshold_ratio,
                    rows=tuple(rows), selected_index=selected_index,
                    selection=selection)
