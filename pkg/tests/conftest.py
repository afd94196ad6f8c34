"""Shared fixtures and helpers for the test suite."""
from __future__ import annotations

import contextlib
import io
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import fairerm as fe
from fairerm import cli as fair_cli

# Solvers go through a JIT warm-up on first call, so wall-clock deadlines
# are meaningless for property tests.
settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("suite")

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
TINY_TRAIN = os.path.join(DATA_DIR, "tiny_train.csv")
GOLDEN_ALPHA = os.path.join(DATA_DIR, "golden_train_alpha.json")


def random_dataset(rng: np.random.Generator, n: int = 24, d: int = 3,
                   k: int = 2) -> fe.Dataset:
    """Random dataset where every group keeps at least one positive row."""
    features = rng.normal(size=(n, d))
    labels = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    groups = rng.integers(0, k, size=n).astype(np.int64)
    for g in range(k):
        labels[g] = 1.0
        groups[g] = g
    names = tuple(chr(ord("a") + i) for i in range(k))
    return fe.Dataset(features, labels, groups, names)


def run_cli(argv) -> tuple[int, str, str]:
    """Invoke the console entry point in-process; returns (code, out, err)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = fair_cli.main([str(a) for a in argv])
        except SystemExit as exc:  # argparse uses exit code 2 for usage
            code = exc.code if isinstance(exc.code, int) else 2
    return code, out.getvalue(), err.getvalue()


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def toy_splits() -> tuple[fe.Dataset, fe.Dataset]:
    """Small synthetic train/test pair (160 rows each)."""
    return fe.generate_synthetic(11, 0.05)


@pytest.fixture(scope="session")
def tiny_data() -> fe.Dataset:
    return fe.load_csv(TINY_TRAIN, fe.ColumnSchema("label", "group"))
