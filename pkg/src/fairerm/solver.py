"""Training engines for hinge-loss models with an optional group-fairness
constraint.

The primal problem is Tikhonov-regularized hinge loss with no bias term,

    min_w  0.5*||w||^2 + C * sum_i max(0, 1 - y_i <w, phi(x_i)>)
    s.t.   |<w, u>| <= epsilon,

where u is the difference between the two groups' positive-class
barycenters in feature space (C = 1/(2*lambda) in the penalty-weighted
formulation).  Its dual over alpha in [0,C]^n and a free scalar rho is

    D(alpha, rho) = -0.5*||h + rho*u||^2 + sum_i alpha_i - epsilon*|rho|,
    h = sum_i alpha_i y_i phi(x_i),

and the trained weight vector is w = h + rho*u.  Three training paths
are provided: the constrained dual itself, the epsilon=0 reduction to an
unconstrained fit under the direction-removing kernel, and the plain
unconstrained baseline.  A slow projected-gradient oracle (independent
code path) backs the tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _coord
from .data import Dataset
from .fairness import sign
from .kernels import (DEGENERATE_DIRECTION, KernelSpec, direction_norm_sq,
                      direction_values, gram, modified_gram)

__all__ = [
    "SvmConfig",
    "FairSvmModel",
    "LinearModel",
    "NonConvergenceWarning",
    "train_fair_svm",
    "train_fair_svm_kernelpath",
    "train_svm_unconstrained",
    "qp_oracle",
    "predict",
    "export_linear",
    "dual_objective",
    "primal_objective",
]

MODEL_FORMAT_VERSION = 1


class NonConvergenceWarning(RuntimeWarning):
    """Sweep cap reached before the improvement tolerance."""


@dataclass(frozen=True)
class SvmConfig:
    """Hyperparameters for one SVM fit.

    C is the box bound on dual coordinates (equal to 1/(2*lambda));
    epsilon bounds |<w, u>|.  tol is the largest per-sweep objective
    improvement at which ascent stops; max_passes caps the sweep count
    and defaults to 10*n at fit time.
    """

    C: float
    epsilon: float = 0.0
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("linear"))
    tol: float = 1e-6
    max_passes: int | None = None

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_passes is not None and self.max_passes < 1:
            raise ValueError("max_passes must be positive")

    def resolved_max_passes(self, n: int) -> int:
        return self.max_passes if self.max_passes is not None else 10 * n


@dataclass(frozen=True)
class LinearModel:
    """Explicit weight vector; scores are plain inner products (no bias)."""

    w: np.ndarray
    converged: bool = True

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).ravel().copy()
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    def decision_values(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[1] != self.w.shape[0]:
            raise ValueError(f"model has {self.w.shape[0]} weights, "
                             f"data has {features.shape[1]} features")
        return features @ self.w

    def to_json_dict(self) -> dict:
        return {"version": MODEL_FORMAT_VERSION, "family": "linear",
                "w": self.w.tolist(), "converged": bool(self.converged)}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LinearModel":
        return cls(np.asarray(doc["w"]), bool(doc.get("converged", True)))


@dataclass(frozen=True)
class FairSvmModel:
    """Trained dual SVM with its constraint bookkeeping.

    The decision function is

        f(x) = sum_i alpha_i y_i k(x_i, x) + rho * <u, phi(x)>,

    with <u, phi(x)> evaluated through kernel sums over the stored
    positive-class index sets.  For unconstrained fits rho is 0.
    kkt_residual is the largest violation of the box stationarity
    conditions at the returned iterate; objective_trace holds the dual
    value after each sweep.
    """

    alpha: np.ndarray
    rho: float
    cfg: SvmConfig
    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    group_names: tuple[str, ...]
    v: np.ndarray
    u_norm_sq: float
    objective: float
    kkt_residual: float
    converged: bool
    n_sweeps: int
    objective_trace: np.ndarray
    w: np.ndarray | None = None

    def __post_init__(self):
        for name in ("alpha", "features", "labels", "groups", "v",
                     "objective_trace"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.w is not None:
            w = np.ascontiguousarray(self.w, dtype=np.float64)
            w.flags.writeable = False
            object.__setattr__(self, "w", w)

    @property
    def is_linear(self) -> bool:
        return self.cfg.kernel.kind == "linear"

    def _positive_sets(self) -> tuple[np.ndarray, np.ndarray]:
        pos = self.labels > 0
        return (np.flatnonzero(pos & (self.groups == 0)),
                np.flatnonzero(pos & (self.groups == 1)))

    def decision_values(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.features.shape[1]:
            raise ValueError(
                f"model was trained on {self.features.shape[1]} features, "
                f"got shape {features.shape}")
        if self.is_linear and self.w is not None:
            return features @ self.w
        k_cross = gram(self.cfg.kernel, features, self.features)
        scores = k_cross @ (self.alpha * self.labels)
        if self.rho != 0.0:
            idx_a, idx_b = self._positive_sets()
            scores = scores + self.rho * direction_values(k_cross, idx_a, idx_b)
        return scores

    def constraint_value(self) -> float:
        """<w, u> at the trained iterate, via kernel sums."""
        s = float(np.dot(self.alpha * self.labels, self.v))
        return s + self.rho * self.u_norm_sq

    def to_json_dict(self) -> dict:
        doc = {
            "version": MODEL_FORMAT_VERSION,
            "family": "svm",
            "kernel": self.cfg.kernel.to_json_dict(),
            "C": self.cfg.C,
            "epsilon": self.cfg.epsilon,
            "tol": self.cfg.tol,
            "alpha": self.alpha.tolist(),
            "rho": self.rho,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "groups": self.groups.tolist(),
            "group_names": list(self.group_names),
            "v": self.v.tolist(),
            "u_norm_sq": self.u_norm_sq,
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "converged": bool(self.converged),
            "n_sweeps": int(self.n_sweeps),
        }
        if self.w is not None:
            doc["w"] = self.w.tolist()
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FairSvmModel":
        cfg = SvmConfig(C=doc["C"], epsilon=doc["epsilon"],
                        kernel=KernelSpec.from_json_dict(doc["kernel"]),
                        tol=doc.get("tol", 1e-6))
        w = np.asarray(doc["w"]) if "w" in doc else None
        return cls(alpha=np.asarray(doc["alpha"]), rho=float(doc["rho"]),
                   cfg=cfg, features=np.asarray(doc["features"]),
                   labels=np.asarray(doc["labels"]),
                   groups=np.asarray(doc["groups"], dtype=np.int64),
                   group_names=tuple(doc["group_names"]),
                   v=np.asarray(doc["v"]), u_norm_sq=float(doc["u_norm_sq"]),
                   objective=float(doc["objective"]),
                   kkt_residual=float(doc["kkt_residual"]),
                   converged=bool(doc["converged"]),
                   n_sweeps=int(doc["n_sweeps"]),
                   objective_trace=np.zeros(0), w=w)


def _exact_rho(s: float, u_norm_sq: float, epsilon: float) -> float:
    t = abs(s) - epsilon
    if t <= 0.0:
        return 0.0
    return (t if s < 0.0 else -t) / u_norm_sq


def _kkt_residual(alpha: np.ndarray, y: np.ndarray, f: np.ndarray, c: float,
                  rho: float, s: float, u_norm_sq: float,
                  epsilon: float, fair: bool) -> float:
    """Largest stationarity violation of the dual iterate.

    Box coordinates: alpha_i = 0 needs y_i f_i >= 1, alpha_i = C needs
    y_i f_i <= 1, interior needs y_i f_i = 1.  The direction coefficient
    needs 0 in the subdifferential of its 1-D objective.
    """
    margin = y * f
    at_zero = alpha <= 0.0
    at_cap = alpha >= c
    res = 0.0
    if np.any(at_zero):
        res = max(res, float(np.max(np.maximum(0.0, 1.0 - margin[at_zero]))))
    if np.any(at_cap):
        res = max(res, float(np.max(np.maximum(0.0, margin[at_cap] - 1.0))))
    interior = ~(at_zero | at_cap)
    if np.any(interior):
        res = max(res, float(np.max(np.abs(margin[interior] - 1.0))))
    if fair:
        grad = -u_norm_sq * rho - s
        if rho > 0.0:
            res = max(res, abs(grad - epsilon))
        elif rho < 0.0:
            res = max(res, abs(grad + epsilon))
        else:
            res = max(res, max(0.0, abs(grad) - epsilon))
    return res


def _check_trace(trace: np.ndarray) -> None:
    # exact 1-D maximizer updates cannot decrease the objective; allow
    # only floating-point noise
    if trace.size >= 2:
        slack = 1e-9 * (1.0 + float(np.max(np.abs(trace))))
        drop = float(np.min(np.diff(trace)))
        if drop < -slack:
            raise RuntimeError(f"dual objective decreased by {-drop:g} "
                               "during ascent; solver state is corrupt")


def _fair_direction(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if data.n_groups != 2:
        raise ValueError("fairness-constrained training requires exactly "
                         f"two groups, got {data.n_groups}")
    idx_a = data.positive_indices(0)
    idx_b = data.positive_indices(1)
    for idx, g in ((idx_a, 0), (idx_b, 1)):
        if idx.size == 0:
            raise ValueError(f"group {data.group_names[g]!r} has no "
                             "positive-labeled training rows")
    return idx_a, idx_b


def train_fair_svm(data: Dataset, cfg: SvmConfig) -> FairSvmModel:
    """Maximize the constrained dual by cyclic coordinate ascent.

    Each alpha update is the exact clipped 1-D maximizer; once per sweep
    the direction coefficient rho takes its exact soft-threshold step.
    If the two barycenters coincide the constraint is vacuous: a warning
    is raised and the fit proceeds unconstrained.
    """
    idx_a, idx_b = _fair_direction(data)
    x, y = data.features, data.labels
    max_sweeps = cfg.resolved_max_passes(data.n)

    if cfg.kernel.kind == "linear":
        u_in = x[idx_a].mean(axis=0) - x[idx_b].mean(axis=0)
        u_norm_sq = float(u_in @ u_in)
        v = x @ u_in
        fair = u_norm_sq >= DEGENERATE_DIRECTION
        if not fair:
            warnings.warn("positive-class barycenters coincide; constraint "
                          "is vacuous, training unconstrained")
        alpha, rho, sweeps, converged, trace = _coord.solve_svm_linear(
            x, y, u_in, u_norm_sq, cfg.C, cfg.epsilon, fair, cfg.tol,
            max_sweeps)
        h = x.T @ (alpha * y)
        s = float(h @ u_in)
        if fair:
            rho = _exact_rho(s, u_norm_sq, cfg.epsilon)
        w = h + rho * u_in
        f = x @ w
        objective = (-0.5 * float(w @ w) + float(alpha.sum())
                     - cfg.epsilon * abs(rho))
    else:
        k = gram(cfg.kernel, x)
        v = direction_values(k, idx_a, idx_b)
        u_norm_sq = direction_norm_sq(k, idx_a, idx_b)
        fair = u_norm_sq >= DEGENERATE_DIRECTION
        if not fair:
            warnings.warn("positive-class barycenters coincide; constraint "
                          "is vacuous, training unconstrained")
        alpha, rho, sweeps, converged, trace = _coord.solve_svm_gram(
            k, y, v, u_norm_sq, cfg.C, cfg.epsilon, fair, cfg.tol, max_sweeps)
        ay = alpha * y
        q = k @ ay
        s = float(ay @ v)
        if fair:
            rho = _exact_rho(s, u_norm_sq, cfg.epsilon)
        f = q + rho * v
        objective = (-0.5 * (float(ay @ q) + 2.0 * rho * s
                             + rho * rho * u_norm_sq)
                     + float(alpha.sum()) - cfg.epsilon * abs(rho))
        w = None
    _check_trace(trace)
    if not converged:
        warnings.warn(f"sweep cap {max_sweeps} reached before tolerance "
                      f"{cfg.tol:g}", NonConvergenceWarning)
    kkt = _kkt_residual(alpha, y, f, cfg.C, rho, s, u_norm_sq, cfg.epsilon,
                        fair)
    return FairSvmModel(alpha=alpha, rho=float(rho), cfg=cfg, features=x,
                        labels=y, groups=data.groups,
                        group_names=data.group_names, v=v,
                        u_norm_sq=u_norm_sq, objective=float(objective),
                        kkt_residual=float(kkt), converged=bool(converged),
                        n_sweeps=int(sweeps), objective_trace=trace, w=w)


def train_svm_unconstrained(data: Dataset, cfg: SvmConfig) -> FairSvmModel:
    """Plain hinge-loss SVM dual: the rho coordinate frozen at zero."""
    x, y = data.features, data.labels
    max_sweeps = cfg.resolved_max_passes(data.n)
    zeros_d = np.zeros(data.dim)
    if cfg.kernel.kind == "linear":
        alpha, rho, sweeps, converged, trace = _coord.solve_svm_linear(
            x, y, zeros_d, 0.0, cfg.C, cfg.epsilon, False, cfg.tol,
            max_sweeps)
        w = x.T @ (alpha * y)
        f = x @ w
        objective = -0.5 * float(w @ w) + float(alpha.sum())
    else:
        k = gram(cfg.kernel, x)
        alpha, rho, sweeps, converged, trace = _coord.solve_svm_gram(
            k, y, np.zeros(data.n), 0.0, cfg.C, cfg.epsilon, False, cfg.tol,
            max_sweeps)
        ay = alpha * y
        f = k @ ay
        objective = -0.5 * float(ay @ f) + float(alpha.sum())
        w = None
    _check_trace(trace)
    if not converged:
        warnings.warn(f"sweep cap {max_sweeps} reached before tolerance "
                      f"{cfg.tol:g}", NonConvergenceWarning)
    kkt = _kkt_residual(alpha, y, f, cfg.C, 0.0, 0.0, 0.0, cfg.epsilon, False)
    return FairSvmModel(alpha=alpha, rho=0.0, cfg=cfg, features=x, labels=y,
                        groups=data.groups, group_names=data.group_names,
                        v=np.zeros(data.n), u_norm_sq=0.0,
                        objective=float(objective), kkt_residual=float(kkt),
                        converged=bool(converged), n_sweeps=int(sweeps),
                        objective_trace=trace, w=w)


def train_fair_svm_kernelpath(data: Dataset, cfg: SvmConfig) -> FairSvmModel:
    """Exact-fairness fit via the direction-removing kernel.

    Requires epsilon = 0.  Runs the unconstrained solver on the Gram
    matrix of the kernel with the barycenter-difference direction
    projected out, then recovers rho so that predictions are expressed
    through the original kernel.  Equivalent to train_fair_svm at
    epsilon = 0.
    """
    if cfg.epsilon != 0.0:
        raise ValueError("the kernel path realizes the exact constraint; "
                         "epsilon must be 0")
    idx_a, idx_b = _fair_direction(data)
    x, y = data.features, data.labels
    max_sweeps = cfg.resolved_max_passes(data.n)
    k = gram(cfg.kernel, x)
    v = direction_values(k, idx_a, idx_b)
    u_norm_sq = direction_norm_sq(k, idx_a, idx_b)
    fair = u_norm_sq >= DEGENERATE_DIRECTION
    if fair:
        k_fit = modified_gram(k, v, v, u_norm_sq)
    else:
        warnings.warn("positive-class barycenters coincide; the modified "
                      "kernel equals the original")
        k_fit = k
    alpha, _, sweeps, converged, trace = _coord.solve_svm_gram(
        k_fit, y, np.zeros(data.n), 0.0, cfg.C, 0.0, False, cfg.tol,
        max_sweeps)
    _check_trace(trace)
    if not converged:
        warnings.warn(f"sweep cap {max_sweeps} reached before tolerance "
                      f"{cfg.tol:g}", NonConvergenceWarning)
    ay = alpha * y
    s = float(ay @ v)
    rho = -s / u_norm_sq if fair else 0.0
    q = k @ ay
    f = q + rho * v
    objective = (-0.5 * (float(ay @ q) + 2.0 * rho * s
                         + rho * rho * u_norm_sq) + float(alpha.sum()))
    kkt = _kkt_residual(alpha, y, f, cfg.C, rho, s, u_norm_sq, 0.0, fair)
    w = None
    if cfg.kernel.kind == "linear":
        u_in = x[idx_a].mean(axis=0) - x[idx_b].mean(axis=0)
        w = x.T @ ay + rho * u_in
    return FairSvmModel(alpha=alpha, rho=float(rho), cfg=cfg, features=x,
                        labels=y, groups=data.groups,
                        group_names=data.group_names, v=v,
                        u_norm_sq=u_norm_sq, objective=float(objective),
                        kkt_residual=float(kkt), converged=bool(converged),
                        n_sweeps=int(sweeps), objective_trace=trace, w=w)


def predict(model, points: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Scores and hard labels on a dataset; sign(0) = -1."""
    scores = model.decision_values(points.features)
    return scores, sign(scores)


def export_linear(model: FairSvmModel) -> LinearModel:
    """Explicit weight vector w = sum_i alpha_i y_i x_i + rho * u.

    Only defined for the linear kernel, where feature space is input
    space and u is the plain barycenter difference.
    """
    if model.cfg.kernel.kind != "linear":
        raise ValueError("explicit weights exist only for the linear kernel")
    if model.w is not None:
        return LinearModel(model.w, model.converged)
    h = model.features.T @ (model.alpha * model.labels)
    if model.rho != 0.0:
        idx_a, idx_b = model._positive_sets()
        u_in = (model.features[idx_a].mean(axis=0)
                - model.features[idx_b].mean(axis=0))
        h = h + model.rho * u_in
    return LinearModel(h, model.converged)


def dual_objective(alpha: np.ndarray, rho: float, k: np.ndarray,
                   y: np.ndarray, v: np.ndarray, u_norm_sq: float,
                   epsilon: float) -> float:
    """Dual value at an arbitrary (alpha, rho), from Gram-space pieces."""
    ay = np.asarray(alpha, dtype=np.float64) * np.asarray(y, dtype=np.float64)
    s = float(ay @ np.asarray(v, dtype=np.float64))
    hsq = float(ay @ (np.asarray(k, dtype=np.float64) @ ay))
    return (-0.5 * (hsq + 2.0 * rho * s + rho * rho * u_norm_sq)
            + float(np.sum(alpha)) - epsilon * abs(rho))


def primal_objective(w: np.ndarray, data: Dataset, c: float) -> float:
    """0.5*||w||^2 + C * sum hinge, the box-scaled primal value."""
    w = np.asarray(w, dtype=np.float64)
    margins = data.labels * (data.features @ w)
    return float(0.5 * (w @ w) + c * np.sum(np.maximum(0.0, 1.0 - margins)))


# ---------------------------------------------------------------------------
# Validation oracle: projected gradient ascent on the same dual, sharing no
# update code with the sweep solvers above.  Slow and only for small n.

_ORACLE_MAX_N = 30


@njit(cache=True, nogil=True)
def _oracle_ascent(k, y, v, u_norm_sq, c, eps, fair, step0, decay, max_iter):
    n = k.shape[0]
    alpha = np.zeros(n)
    rho = 0.0
    for it in range(max_iter):
        step = step0 / (1.0 + decay * it)
        # exact rho for the current alpha
        if fair:
            s = 0.0
            for i in range(n):
                s += alpha[i] * y[i] * v[i]
            t = abs(s) - eps
            rho = 0.0
            if t > 0.0:
                rho = (t if s < 0.0 else -t) / u_norm_sq
        # gradient of the dual in alpha
        resid = 0.0
        new_alpha = np.empty(n)
        for i in range(n):
            qi = 0.0
            for j in range(n):
                qi += k[i, j] * alpha[j] * y[j]
            g = 1.0 - y[i] * (qi + rho * v[i])
            # natural residual at unit step, for the stopping rule
            nat = alpha[i] + g
            if nat < 0.0:
                nat = 0.0
            elif nat > c:
                nat = c
            if abs(nat - alpha[i]) > resid:
                resid = abs(nat - alpha[i])
            ai = alpha[i] + step * g
            if ai < 0.0:
                ai = 0.0
            elif ai > c:
                ai = c
            new_alpha[i] = ai
        alpha = new_alpha
        if resid <= 1e-12:
            break
    if fair:
        s = 0.0
        for i in range(n):
            s += alpha[i] * y[i] * v[i]
        t = abs(s) - eps
        rho = 0.0
        if t > 0.0:
            rho = (t if s < 0.0 else -t) / u_norm_sq
    return alpha, rho


def qp_oracle(data: Dataset, cfg: SvmConfig) -> tuple[np.ndarray, float, float]:
    """Slow independent maximizer of the dual; returns (alpha, rho, objective).

    Projected gradient ascent with a slowly diminishing step seeded from
    the Gram spectrum, the direction coefficient re-solved exactly every
    iteration, a 10^6-iteration cap, and a small-n guard.  Builds its
    own Gram matrix and direction statistics from first principles.
    """
    if data.n > _ORACLE_MAX_N:
        raise ValueError(f"oracle accepts at most {_ORACLE_MAX_N} rows, "
                         f"got {data.n}")
    if data.n_groups != 2:
        raise ValueError("oracle requires exactly two groups")
    x, y = data.features, data.labels
    n = data.n

    def kfun(p, q):
        if cfg.kernel.kind == "linear":
            return float(np.dot(p, q))
        diff = p - q
        return float(np.exp(-cfg.kernel.gamma * np.dot(diff, diff)))

    k = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            k[i, j] = kfun(x[i], x[j])

    pos_a = [i for i in range(n) if y[i] > 0 and data.groups[i] == 0]
    pos_b = [i for i in range(n) if y[i] > 0 and data.groups[i] == 1]
    if not pos_a or not pos_b:
        raise ValueError("both groups need a positive-labeled row")
    v = np.zeros(n)
    for i in range(n):
        v[i] = (sum(k[i, j] for j in pos_a) / len(pos_a)
                - sum(k[i, j] for j in pos_b) / len(pos_b))
    u_norm_sq = (sum(k[i, j] for i in pos_a for j in pos_a) / len(pos_a) ** 2
                 + sum(k[i, j] for i in pos_b for j in pos_b) / len(pos_b) ** 2
                 - 2.0 * sum(k[i, j] for i in pos_a for j in pos_b)
                 / (len(pos_a) * len(pos_b)))
    fair = u_norm_sq >= DEGENERATE_DIRECTION

    # Lipschitz bound for the rho-eliminated gradient
    lip = float(np.linalg.eigvalsh(k).max())
    if fair:
        lip += float(v @ v) / u_norm_sq
    step = 1.0 / max(lip, 1e-12)

    alpha, rho = _oracle_ascent(k, y, v, u_norm_sq, cfg.C, cfg.epsilon,
                                fair, step, 5e-7, 1_000_000)
    obj = dual_objective(alpha, rho, k, y, v, u_norm_sq, cfg.epsilon)
    return alpha, float(rho), float(obj)
