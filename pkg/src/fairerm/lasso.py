"""Sparse linear models: cyclic coordinate-descent Lasso, plus the
barycenter-removing preprocessing that makes them fair.

The objective is (1/n)*||y - Xw||^2 + lambda*||w||_1 on labels in
{-1,+1}, with no intercept (consistent with the SVM trainers; append a
constant feature if an intercept is wanted).  Fairness comes from
training on drop-one-feature transformed data, so the fitted model's
group-conditional mean scores on positives are equal by construction.
"""

from __future__ import annotations

import warnings

import numpy as np
from dataclasses import dataclass
from numba import njit

from . import _coord
from .data import Dataset
from .preprocess import FairTransform, fit_transform
from .solver import LinearModel, NonConvergenceWarning

__all__ = [
    "LassoConfig",
    "train_lasso",
    "train_fair_lasso",
    "lambda_max",
    "lasso_objective",
    "selected_feature_count",
    "proximal_oracle",
]


@dataclass(frozen=True)
class LassoConfig:
    """Penalty weight and stopping rule for one Lasso fit.

    tol is the largest per-sweep coefficient change at which descent
    stops; sparsity_threshold is the cutoff for counting a feature as
    selected.
    """

    lam: float
    tol: float = 1e-8
    max_sweeps: int = 10000
    sparsity_threshold: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")


def train_lasso(data: Dataset, cfg: LassoConfig) -> LinearModel:
    """Minimize (1/n)*||y - Xw||^2 + lam*||w||_1 by coordinate descent.

    Coordinates start at zero and are visited cyclically with exact
    soft-threshold updates; warns (and flags the model) when the sweep
    cap is hit first.
    """
    w, sweeps, converged, trace = _coord.solve_lasso_cd(
        data.features, data.labels, cfg.lam, cfg.tol, cfg.max_sweeps)
    if trace.size >= 2:
        slack = 1e-9 * (1.0 + float(np.max(np.abs(trace))))
        if float(np.max(np.diff(trace))) > slack:
            raise RuntimeError("descent objective increased; solver state "
                               "is corrupt")
    if not converged:
        warnings.warn(f"sweep cap {cfg.max_sweeps} reached before "
                      f"tolerance {cfg.tol:g}", NonConvergenceWarning)
    return LinearModel(w, converged=bool(converged))


def train_fair_lasso(data: Dataset,
                     cfg: LassoConfig) -> tuple[FairTransform, LinearModel]:
    """Drop-one-feature transform fitted on the data, then a Lasso on the
    transformed features.  The model scores transformed inputs; keep the
    transform to score new points."""
    transform, reduced = fit_transform(data, "drop_feature")
    return transform, train_lasso(reduced, cfg)


def lambda_max(data: Dataset) -> float:
    """Smallest penalty at which the all-zero model is optimal."""
    grad = 2.0 * (data.features.T @ data.labels) / data.n
    return float(np.max(np.abs(grad))) if grad.size else 0.0


def lasso_objective(w: np.ndarray, data: Dataset, lam: float) -> float:
    w = np.asarray(w, dtype=np.float64)
    r = data.labels - data.features @ w
    return float(r @ r / data.n + lam * np.sum(np.abs(w)))


def selected_feature_count(model: LinearModel,
                           threshold: float = 1e-8) -> int:
    """Number of weights with magnitude above the reporting threshold."""
    return int(np.sum(np.abs(model.w) > threshold))


# ---------------------------------------------------------------------------
# Validation oracle: proximal gradient (ISTA), independent of the
# coordinate-descent path above.

@njit(cache=True, nogil=True)
def _ista(x, y, lam, step, max_iter):
    n, d = x.shape
    w = np.zeros(d)
    for _ in range(max_iter):
        biggest = 0.0
        # residual for the full-gradient step: r = y - Xw
        r = np.empty(n)
        for i in range(n):
            acc = y[i]
            for j in range(d):
                acc -= x[i, j] * w[j]
            r[i] = acc
        for j in range(d):
            g = 0.0
            for i in range(n):
                g += x[i, j] * r[i]
            g = 2.0 * g / n
            z = w[j] + step * g
            t = abs(z) - step * lam
            w_new = 0.0
            if t > 0.0:
                w_new = (t if z > 0.0 else -t)
            dw = w_new - w[j]
            if abs(dw) > biggest:
                biggest = abs(dw)
            w[j] = w_new
        if biggest <= 1e-14:
            break
    return w


def proximal_oracle(data: Dataset, cfg: LassoConfig) -> tuple[np.ndarray, float]:
    """Slow independent Lasso minimizer; returns (w, objective).

    Full-gradient proximal steps at the exact 1/L step size, run to a
    1e-14 per-iteration movement floor with a 10^6-iteration cap.
    """
    x = data.features
    gram = (2.0 / data.n) * (x.T @ x)
    lip = float(np.linalg.eigvalsh(gram).max()) if x.shape[1] else 1.0
    step = 1.0 / max(lip, 1e-12)
    w = _ista(x, data.labels, cfg.lam, step, 1_000_000)
    return w, lasso_objective(w, data, cfg.lam)
