"""Group fairness metrics for score functions on labeled, group-annotated data.

All metrics share one convention: a score of exactly zero is classified
as the negative class, and a prediction is correct when ``y * f > 0``.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .data import Dataset

__all__ = [
    "sign",
    "accuracy",
    "group_true_positive_rates",
    "deo",
    "linear_gap",
    "delta_hat",
    "fairness_report",
]


def sign(scores: np.ndarray) -> np.ndarray:
    """Decision map with sign(0) = -1."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.where(scores > 0, 1.0, -1.0)


def accuracy(scores: np.ndarray, data: Dataset) -> float:
    scores = _check_scores(scores, data)
    return float(np.mean(data.labels * scores > 0))


def _check_scores(scores: np.ndarray, data: Dataset) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.shape[0] != data.n:
        raise ValueError(f"got {scores.shape[0]} scores for {data.n} rows")
    return scores


def _positive_groups(data: Dataset) -> list[np.ndarray]:
    # every group must contribute at least one positive, otherwise the
    # conditional rates below are undefined
    out = []
    for g in range(data.n_groups):
        idx = data.positive_indices(g)
        if idx.size == 0:
            raise ValueError(
                f"group {data.group_names[g]!r} has no positive-labeled rows")
        out.append(idx)
    return out


def group_true_positive_rates(scores: np.ndarray, data: Dataset) -> np.ndarray:
    """Per-group P(f(x) > 0 | y = +1), indexed like group_names."""
    scores = _check_scores(scores, data)
    rates = np.empty(data.n_groups)
    for g, idx in enumerate(_positive_groups(data)):
        rates[g] = np.mean(scores[idx] > 0)
    return rates


def deo(scores: np.ndarray, data: Dataset) -> float:
    """Difference of equal opportunity: largest pairwise gap between
    group-conditional true positive rates."""
    rates = group_true_positive_rates(scores, data)
    if rates.size < 2:
        return 0.0
    return float(rates.max() - rates.min())


def linear_gap(scores: np.ndarray, data: Dataset) -> float:
    """Largest pairwise half-gap between group means of the raw score on
    positive-labeled rows.

    This is the quantity a fairness-constrained linear-loss trainer
    actually controls; ``deo`` differs from it by at most ``delta_hat``.
    """
    scores = _check_scores(scores, data)
    means = [scores[idx].mean() for idx in _positive_groups(data)]
    if len(means) < 2:
        return 0.0
    return float(max(0.5 * abs(ma - mb) for ma, mb in combinations(means, 2)))


def delta_hat(scores: np.ndarray, data: Dataset) -> float:
    """Sum over groups of half the absolute mean of sign(f) - f on
    positive-labeled rows.

    Diagnostic for the linear-loss relaxation: with two groups,
    deo <= linear_gap + delta_hat always holds, so a small value here
    certifies that controlling ``linear_gap`` also controls ``deo``.
    """
    scores = _check_scores(scores, data)
    total = 0.0
    for idx in _positive_groups(data):
        s = scores[idx]
        total += 0.5 * abs(np.mean(sign(s) - s))
    return float(total)


def fairness_report(scores: np.ndarray, data: Dataset) -> dict:
    """Bundle of the metrics above plus per-group rates, JSON-friendly."""
    rates = group_true_positive_rates(scores, data)
    return {
        "accuracy": accuracy(scores, data),
        "deo": deo(scores, data),
        "linear_gap": linear_gap(scores, data),
        "delta_hat": delta_hat(scores, data),
        "tpr_by_group": {name: float(rates[g])
                         for g, name in enumerate(data.group_names)},
    }
