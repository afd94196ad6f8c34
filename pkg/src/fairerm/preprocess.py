"""Fairness-by-representation transforms for linear models.

Both transforms remove the direction(s) along which the groups'
positive-class barycenters differ, so any linear model trained on the
output has equal group-conditional mean scores on positives by
construction.

* ``DropFeature``: solve the two-group constraint ``<w, u> = 0`` for the
  pivot weight and substitute it away.  Output has one feature fewer.
  Pivot is the coordinate where |u| is largest (lowest index on ties).
* ``Projection``: map x to (I - P)x where P projects onto the span of
  the pairwise barycenter differences.  Works for any group count;
  output keeps the input dimension but is rank-deficient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset

__all__ = ["FairTransform", "fit_transform", "positive_barycenters"]

_KINDS = ("drop_feature", "projection")
_RANK_TOL = 1e-10


def positive_barycenters(data: Dataset) -> np.ndarray:
    """(k x d) matrix of per-group feature means over positive-labeled rows."""
    out = np.empty((data.n_groups, data.dim))
    for g in range(data.n_groups):
        idx = data.positive_indices(g)
        if idx.size == 0:
            raise ValueError(
                f"group {data.group_names[g]!r} has no positive-labeled rows")
        out[g] = data.features[idx].mean(axis=0)
    return out


@dataclass(frozen=True)
class FairTransform:
    """Fitted representation change; immutable, apply() is pure.

    For kind "drop_feature", ``u`` is the two-group barycenter difference
    and ``dropped_index`` the eliminated pivot column.  For kind
    "projection", ``basis`` holds orthonormal columns spanning the
    barycenter-difference subspace (possibly zero columns when all
    barycenters coincide).
    """

    kind: str
    u: np.ndarray | None = None
    dropped_index: int | None = None
    basis: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "drop_feature":
            if self.u is None or self.dropped_index is None:
                raise ValueError("drop_feature needs u and dropped_index")
            u = np.asarray(self.u, dtype=np.float64).ravel()
            if not 0 <= self.dropped_index < u.shape[0]:
                raise ValueError("dropped_index out of range")
            if abs(u[self.dropped_index]) == 0.0:
                raise ValueError("pivot entry of u is zero")
            u = u.copy()
            u.flags.writeable = False
            object.__setattr__(self, "u", u)
        else:
            if self.basis is None:
                raise ValueError("projection needs a basis matrix")
            basis = np.asarray(self.basis, dtype=np.float64)
            if basis.ndim != 2:
                raise ValueError("basis must be d x r")
            if basis.shape[1]:
                g = basis.T @ basis
                if np.max(np.abs(g - np.eye(basis.shape[1]))) > _RANK_TOL:
                    raise ValueError("basis columns are not orthonormal")
            basis = basis.copy()
            basis.flags.writeable = False
            object.__setattr__(self, "basis", basis)

    @property
    def input_dim(self) -> int:
        if self.kind == "drop_feature":
            return self.u.shape[0]
        return self.basis.shape[0]

    @property
    def output_dim(self) -> int:
        if self.kind == "drop_feature":
            return self.u.shape[0] - 1
        return self.basis.shape[0]

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.input_dim:
            raise ValueError(
                f"transform fitted for {self.input_dim} features, "
                f"got shape {features.shape}")
        if self.kind == "drop_feature":
            i = self.dropped_index
            keep = [j for j in range(self.u.shape[0]) if j != i]
            # x~_j = x_j - x_i * (u_j / u_i): substitutes the pivot weight
            # -sum_{j != i} w_j u_j / u_i into the inner product
            return features[:, keep] - np.outer(features[:, i],
                                                self.u[keep] / self.u[i])
        if self.basis.shape[1] == 0:
            return features.copy()
        return features - (features @ self.basis) @ self.basis.T

    def apply(self, data: Dataset) -> Dataset:
        names = data.feature_names
        if self.kind == "drop_feature":
            names = tuple(n for j, n in enumerate(names) if j != self.dropped_index)
        return data.with_features(self.transform(data.features), names)

    def reconstruct_weights(self, w_reduced: np.ndarray) -> np.ndarray:
        """Lift drop_feature weights back to input space.

        Re-inserts the pivot weight w_i = -sum_{j != i} w_j u_j / u_i, so
        the returned vector satisfies <w, u> = 0 exactly and reproduces
        the reduced model's scores on untransformed inputs.
        """
        if self.kind != "drop_feature":
            raise ValueError("weight reconstruction only applies to drop_feature")
        w_reduced = np.asarray(w_reduced, dtype=np.float64).ravel()
        if w_reduced.shape[0] != self.output_dim:
            raise ValueError(f"expected {self.output_dim} weights, "
                             f"got {w_reduced.shape[0]}")
        i = self.dropped_index
        keep = [j for j in range(self.u.shape[0]) if j != i]
        w = np.empty(self.u.shape[0])
        w[keep] = w_reduced
        w[i] = -float(w_reduced @ self.u[keep]) / self.u[i]
        return w

    def to_json_dict(self) -> dict:
        if self.kind == "drop_feature":
            return {"kind": self.kind, "u": self.u.tolist(),
                    "dropped_index": int(self.dropped_index)}
        return {"kind": self.kind, "basis": self.basis.tolist(),
                "input_dim": int(self.basis.shape[0])}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FairTransform":
        if doc["kind"] == "drop_feature":
            return cls("drop_feature", u=np.asarray(doc["u"]),
                       dropped_index=int(doc["dropped_index"]))
        basis = np.asarray(doc["basis"], dtype=np.float64)
        if basis.size == 0:
            basis = basis.reshape(int(doc["input_dim"]), 0)
        return cls("projection", basis=basis)


def fit_transform(data: Dataset, kind: str) -> tuple[FairTransform, Dataset]:
    """Fit a transform on the group barycenters of ``data`` and apply it.

    drop_feature requires exactly two groups and a nonzero barycenter
    difference.  projection accepts any group count; difference vectors
    that are linearly dependent on earlier ones are dropped with a
    warning, and if all barycenters coincide the transform is the
    identity.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown transform kind {kind!r}")
    bary = positive_barycenters(data)
    if kind == "drop_feature":
        if data.n_groups != 2:
            raise ValueError("drop_feature requires exactly two groups")
        u = bary[0] - bary[1]
        pivot = int(np.argmax(np.abs(u)))  # lowest index wins ties
        if abs(u[pivot]) < 1e-12:
            raise ValueError("positive-class barycenters coincide: "
                             "drop_feature is undefined")
        t = FairTransform("drop_feature", u=u, dropped_index=pivot)
        return t, t.apply(data)

    diffs = bary[1:] - bary[0]  # k-1 difference vectors vs the first group
    basis = _orthonormal_basis(diffs.T, data.dim)
    t = FairTransform("projection", basis=basis)
    return t, t.apply(data)


def _orthonormal_basis(columns: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the column span, dropping dependent columns."""
    if columns.shape[1] == 0:
        return np.zeros((dim, 0))
    u_full, s_vals, _ = np.linalg.svd(columns, full_matrices=False)
    tol = _RANK_TOL * (s_vals[0] if s_vals.size else 1.0)
    rank = int(np.sum(s_vals > tol))
    if rank < columns.shape[1]:
        warnings.warn(
            f"dropping {columns.shape[1] - rank} linearly dependent "
            "barycenter-difference direction(s)", stacklevel=3)
    if rank == 0:
        return np.zeros((dim, 0))
    return np.ascontiguousarray(u_full[:, :rank])
