"""Kernels, Gram matrices, the fairness-direction statistics, and a binary
Gram cache.

The "fairness direction" u is the difference between the two groups'
feature-space barycenters over positive-labeled rows.  Everything the
trainer needs about u is expressible through the Gram matrix:

* ``direction_values``   v_i = <phi(x_i), u>
* ``direction_norm_sq``  ||u||^2
* ``modified_gram``      K~(x,z) = K(x,z) - <phi(x),u><phi(z),u> / ||u||^2

The modified kernel is the Gram of the data after projecting feature
space onto the orthogonal complement of u, so an unconstrained trainer
on K~ is exactly the constrained trainer on K at tolerance zero.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelSpec",
    "gram",
    "direction_values",
    "direction_norm_sq",
    "modified_gram",
    "save_gram",
    "load_gram",
    "GRAM_MAGIC",
]

_KINDS = ("linear", "rbf")
DEGENERATE_DIRECTION = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus parameters.  kind is "linear" or "rbf"."""

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("rbf kernel requires gamma > 0")
        elif self.gamma is not None:
            raise ValueError("linear kernel takes no gamma")

    def canonical(self) -> str:
        if self.kind == "linear":
            return "linear"
        return f"rbf:{self.gamma:.17g}"

    def hash_bytes(self) -> bytes:
        """First 8 bytes of sha256 over the canonical form; used by the cache."""
        return hashlib.sha256(self.canonical().encode("ascii")).digest()[:8]

    def to_json_dict(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.gamma is not None:
            doc["gamma"] = self.gamma
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "KernelSpec":
        return cls(doc["kind"], doc.get("gamma"))


def gram(spec: KernelSpec, x: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
    """Gram matrix K[i, j] = kernel(x_i, z_j); z defaults to x."""
    x = np.asarray(x, dtype=np.float64)
    z = x if z is None else np.asarray(z, dtype=np.float64)
    if x.ndim != 2 or z.ndim != 2 or x.shape[1] != z.shape[1]:
        raise ValueError("inputs must be 2-d with matching feature counts")
    if spec.kind == "linear":
        out = x @ z.T
    else:
        # rbf: exp(-gamma * ||x - z||^2), squared distances via the expansion
        sq = (np.sum(x * x, axis=1)[:, None]
              + np.sum(z * z, axis=1)[None, :]
              - 2.0 * (x @ z.T))
        np.maximum(sq, 0.0, out=sq)
        out = np.exp(-spec.gamma * sq)
    if not np.all(np.isfinite(out)):
        raise ValueError("kernel evaluation overflowed to a non-finite value")
    return out


def direction_values(k_cross: np.ndarray, idx_pos_a: np.ndarray,
                     idx_pos_b: np.ndarray) -> np.ndarray:
    """<phi(row_i), u> for each row of a (m x n_train) cross-Gram block."""
    k_cross = np.asarray(k_cross, dtype=np.float64)
    if len(idx_pos_a) == 0 or len(idx_pos_b) == 0:
        raise ValueError("both groups need at least one positive-labeled row")
    return (k_cross[:, idx_pos_a].mean(axis=1)
            - k_cross[:, idx_pos_b].mean(axis=1))


def direction_norm_sq(k_train: np.ndarray, idx_pos_a: np.ndarray,
                      idx_pos_b: np.ndarray) -> float:
    """||u||^2 from the training Gram matrix."""
    k_train = np.asarray(k_train, dtype=np.float64)
    if len(idx_pos_a) == 0 or len(idx_pos_b) == 0:
        raise ValueError("both groups need at least one positive-labeled row")
    kaa = k_train[np.ix_(idx_pos_a, idx_pos_a)].mean()
    kbb = k_train[np.ix_(idx_pos_b, idx_pos_b)].mean()
    kab = k_train[np.ix_(idx_pos_a, idx_pos_b)].mean()
    return float(kaa + kbb - 2.0 * kab)


def modified_gram(k_block: np.ndarray, v_rows: np.ndarray, v_cols: np.ndarray,
                  u_norm_sq: float) -> np.ndarray:
    """Gram block of the projection onto the complement of the direction u.

    k_block may be any (m x p) block; v_rows and v_cols carry the
    direction values of its rows and columns.  Raises when the direction
    is degenerate (the two barycenters coincide).
    """
    if u_norm_sq < DEGENERATE_DIRECTION:
        raise ValueError("fairness direction is degenerate: "
                         "positive-class barycenters coincide")
    k_block = np.asarray(k_block, dtype=np.float64)
    v_rows = np.asarray(v_rows, dtype=np.float64).ravel()
    v_cols = np.asarray(v_cols, dtype=np.float64).ravel()
    if k_block.shape != (v_rows.shape[0], v_cols.shape[0]):
        raise ValueError("direction value vectors do not match block shape")
    return k_block - np.outer(v_rows, v_cols) / u_norm_sq


GRAM_MAGIC = b"FAIRGRAM"
_HEADER = struct.Struct("<8sQQ8s")  # magic, rows, cols, kernel hash


def save_gram(path, k: np.ndarray, spec: KernelSpec) -> None:
    """Write a Gram matrix with a 32-byte header binding it to its kernel."""
    k = np.ascontiguousarray(k, dtype=np.float64)
    if k.ndim != 2:
        raise ValueError("Gram matrix must be 2-d")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRAM_MAGIC, k.shape[0], k.shape[1], spec.hash_bytes()))
        fh.write(k.tobytes(order="C"))


def load_gram(path, spec: KernelSpec) -> np.ndarray:
    """Read a cached Gram matrix, verifying magic, kernel hash, and size."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated Gram cache header")
    magic, rows, cols, khash = _HEADER.unpack_from(raw)
    if magic != GRAM_MAGIC:
        raise ValueError(f"{path}: not a Gram cache file")
    if khash != spec.hash_bytes():
        raise ValueError(f"{path}: cache was built for a different kernel "
                         f"(want {spec.canonical()})")
    body = raw[_HEADER.size:]
    expected = rows * cols * 8
    if len(body) != expected:
        raise ValueError(f"{path}: body holds {len(body)} bytes, "
                         f"header promises {expected}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy()
