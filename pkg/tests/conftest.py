"""
Shared fixtures for all bsvm tests.
"""
from __future__ import annotations

import logging

import numpy as np
import pytest
from sqlalchemy.pool import StaticPool
from sqlmodel import SQLModel, create_engine

from bsvm import storage_runs
from bsvm.data import Dataset, make_blobs
from bsvm.gradcheck import random_state


# ---------------------------------------------------------------------------
# Run ledger
# ---------------------------------------------------------------------------

@pytest.fixture(autouse=True)
def fresh_db(monkeypatch):
    """
    Point the run ledger at a fresh in-memory SQLite DB for every test and
    make sure no ledger directory leaks in from the environment.
    """
    for name in ("BSVM_DATA_DIR", "BSVM_THREADS", "BSVM_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    mem_engine = create_engine(
        "sqlite:///:memory:",
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    monkeypatch.setattr(storage_runs, "engine", mem_engine)
    SQLModel.metadata.create_all(mem_engine)
    yield mem_engine


@pytest.fixture(autouse=True)
def reset_logging():
    """main() binds the bsvm logger to the current stderr; undo that after each test."""
    yield
    root = logging.getLogger("bsvm")
    root.handlers.clear()
    root.setLevel(logging.NOTSET)


# ---------------------------------------------------------------------------
# Model instances
# ---------------------------------------------------------------------------

@pytest.fixture
def small_instance():
    """(state, X, y) with N=20, C=3, P=5 and non-trivial variational parameters."""
    return random_state(0)


def make_instance(seed: int, **kwargs):
    return random_state(seed, **kwargs)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@pytest.fixture
def blobs() -> Dataset:
    """Three well separated classes in two dimensions, 30 points each."""
    return make_blobs(90, 3, 2, 6.0, seed=0)


def write_csv(path, text: str):
    path.write_text(text, encoding="utf-8")
    return path


def rel_close(a: float, b: float, rel: float) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def dense_kernel(A, B, lengthscale: float, variance: float):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for k in range(B.shape[0]):
            d = A[i] - B[k]
            out[i, k] = variance * np.exp(-0.5 * float(d @ d) / lengthscale**2)
    return out
