"""
Simulated pool-based active learning.

Each seed starts from one randomly chosen labeled instance per class and
then repeatedly retrains from scratch, scores the unlabeled pool with the
configured policy and queries the best-scoring point. Seeds are independent
jobs and may run on worker threads.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .data import Dataset
from .errors import ConfigurationError
from .kernel import init_hyperparams
from .model_core import ModelState
from .models import ALConfig, KernelHyperparams, QueryPolicy, TrainConfig
from .predict import PredictiveDistribution, accuracy, decide, predict_dist, softmax_entropy, variation_ratio
from .trainers import train_adam

logger = logging.getLogger("bsvm.active_learning")

TRACE_COLUMNS = ["step", "query_index", "policy_score", "n_labeled", "test_error"]


@dataclass
class ActiveLearningTrace:
    seed: int
    policy: str
    initial_indices: List[int] = field(default_factory=list)
    query_index: List[Optional[int]] = field(default_factory=list)
    policy_score: List[Optional[float]] = field(default_factory=list)
    n_labeled: List[int] = field(default_factory=list)
    test_error: List[float] = field(default_factory=list)

    def record(self, query: Optional[int], score: Optional[float], n_labeled: int, error: float) -> None:
        self.query_index.append(query)
        self.policy_score.append(score)
        self.n_labeled.append(n_labeled)
        self.test_error.append(float(error))

    @property
    def queried(self) -> List[int]:
        return [q for q in self.query_index if q is not None]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "step": np.arange(len(self.test_error), dtype=np.int64),
                "query_index": pd.array(self.query_index, dtype="Int64"),
                "policy_score": np.array([np.nan if s is None else s for s in self.policy_score], dtype=np.float64),
                "n_labeled": np.asarray(self.n_labeled, dtype=np.int64),
                "test_error": np.asarray(self.test_error, dtype=np.float64),
            },
            columns=TRACE_COLUMNS,
        )


def policy_score(
    dist: PredictiveDistribution,
    policy: QueryPolicy,
    *,
    samples: int = 128,
    seed: int = 0,
) -> NDArray[np.float64]:
    if policy == "variation_ratio":
        return variation_ratio(dist, samples, seed)
    if policy == "mean_entropy":
        return softmax_entropy(dist)
    raise ConfigurationError(f"unknown policy {policy!r}")


def initial_labeled(pool: Dataset, rng: np.random.Generator) -> List[int]:
    """One uniformly random pool index per class, classes in label order."""
    chosen = []
    for c in range(1, pool.class_count + 1):
        members = np.flatnonzero(pool.y == c)
        chosen.append(int(rng.choice(members)))
    return chosen


def _step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def _check_inputs(pool: Dataset, test: Dataset) -> None:
    counts = pool.class_counts()
    if np.any(counts == 0):
        c = int(np.flatnonzero(counts == 0)[0])
        raise ConfigurationError(f"class {pool.label_names[c]!r} has no instance in the pool")
    if pool.n_features != test.n_features:
        raise ConfigurationError("pool and test sets have different feature counts")
    if test.n_points == 0:
        raise ConfigurationError("the test set is empty")


class _Learner:
    def __init__(self, pool: Dataset, test: Dataset, cfg: ALConfig, hyper: KernelHyperparams, seed: int) -> None:
        self.pool = pool
        self.test = test
        self.cfg = cfg
        self.hyper = hyper
        self.seed = seed

    def fit(self, labeled: Sequence[int]) -> ModelState:
        idx = np.asarray(labeled, dtype=np.int64)
        X, y = self.pool.X[idx], self.pool.y[idx]
        state = ModelState.initialize(
            X,
            self.pool.class_count,
            self.cfg.inducing_points,
            seed=self.seed,
            hyper=self.hyper,
        )
        train_cfg = TrainConfig(
            method="adam",
            epochs=self.cfg.retrain_epochs,
            learning_rate=self.cfg.learning_rate,
            seed=self.seed,
            log_every=max(1, self.cfg.retrain_epochs),
        )
        state, _ = train_adam(state, X, y, train_cfg)
        return state

    def test_error(self, state: ModelState) -> float:
        predicted = decide(predict_dist(state, self.test.X))
        return 1.0 - accuracy(predicted, self.test.y)


def run_single_seed(pool: Dataset, test: Dataset, cfg: ALConfig, seed: int) -> ActiveLearningTrace:
    _check_inputs(pool, test)
    rng = np.random.default_rng(seed)
    hyper = init_hyperparams(pool.X, jitter=cfg.jitter, seed=seed)
    learner = _Learner(pool, test, cfg, hyper, seed)

    labeled = initial_labeled(pool, rng)
    trace = ActiveLearningTrace(seed=seed, policy=cfg.policy, initial_indices=list(labeled))
    state = learner.fit(labeled)
    trace.record(None, None, len(labeled), learner.test_error(state))

    for step in range(1, cfg.budget + 1):
        unlabeled = np.setdiff1d(np.arange(pool.n_points), labeled)
        if unlabeled.size == 0:
            logger.warning("seed %d: pool exhausted after %d queries", seed, step - 1)
            break
        dist = predict_dist(state, pool.X[unlabeled])
        scores = policy_score(dist, cfg.policy, samples=cfg.vr_samples, seed=_step_seed(seed, step))
        # unlabeled is sorted, so argmax's first maximum is the smallest pool index
        best = int(np.argmax(scores))
        query = int(unlabeled[best])
        labeled.append(query)
        state = learner.fit(labeled)
        error = learner.test_error(state)
        trace.record(query, float(scores[best]), len(labeled), error)
        logger.info(
            "seed %d %s step %d/%d: queried %d (score %.4f), test error %.4f",
            seed, cfg.policy, step, cfg.budget, query, scores[best], error,
        )
    return trace


def run_active_learning(pool: Dataset, test: Dataset, cfg: ALConfig) -> Dict[int, ActiveLearningTrace]:
    """One trace per seed, keyed by seed in the order of cfg.seeds."""
    _check_inputs(pool, test)
    workers = min(cfg.threads, len(cfg.seeds))
    if workers <= 1:
        return {seed: run_single_seed(pool, test, cfg, seed) for seed in cfg.seeds}
    with ThreadPoolExecutor(max_workers=workers) as pool_exec:
        futures = {seed: pool_exec.submit(run_single_seed, pool, test, cfg, seed) for seed in cfg.seeds}
        return {seed: fut.result() for seed, fut in futures.items()}


def aggregate_traces(traces: Sequence[ActiveLearningTrace]) -> pd.DataFrame:
    """Per-step mean test error and its standard error across seeds."""
    if not traces:
        return pd.DataFrame(columns=["step", "mean_error", "sem_error", "n_seeds"])
    frame = pd.concat([t.to_frame() for t in traces], ignore_index=True)
    grouped = frame.groupby("step")["test_error"]
    out = pd.DataFrame(
        {
            "mean_error": grouped.mean(),
            "sem_error": grouped.sem(ddof=1).fillna(0.0),
            "n_seeds": grouped.count().astype(np.int64),
        }
    )
    return out.reset_index()


def compare_policies(results: Dict[str, Sequence[ActiveLearningTrace]]) -> pd.DataFrame:
    """Per-step mean error, one column per policy."""
    columns = {policy: aggregate_traces(traces).set_index("step")["mean_error"] for policy, traces in results.items()}
    return pd.DataFrame(columns).reset_index()
