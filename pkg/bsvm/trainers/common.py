from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from ..errors import ConfigurationError, NumericalError, TrainingAborted
from ..model_core import ModelState, elbo
from ..models import TrainConfig

logger = logging.getLogger("bsvm.optim")

TRACE_COLUMNS = ["epoch", "elbo", "seconds"]


@dataclass
class TrainTrace:
    method: str
    elbo: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.elbo)

    def record(self, value: float, seconds: float) -> None:
        self.elbo.append(float(value))
        self.seconds.append(float(seconds))

    @property
    def final(self) -> Optional[float]:
        return self.elbo[-1] if self.elbo else None

    @property
    def total_seconds(self) -> float:
        return float(sum(self.seconds))

    def to_frame(self, *, timings: bool = True) -> pd.DataFrame:
        n = len(self.elbo)
        return pd.DataFrame(
            {
                "epoch": np.arange(1, n + 1, dtype=np.int64),
                "elbo": np.asarray(self.elbo, dtype=np.float64),
                "seconds": np.asarray(self.seconds if timings else np.zeros(n), dtype=np.float64),
            },
            columns=TRACE_COLUMNS,
        )


def as_training_data(state: ModelState, X: ArrayLike, y: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise ConfigurationError("X must be a 2-D matrix")
    if y.shape != (X.shape[0],):
        raise ConfigurationError(f"{y.size} labels for {X.shape[0]} training points")
    if state.vp.alpha.size != X.shape[0]:
        raise ConfigurationError(f"state holds {state.vp.alpha.size} alpha entries for {X.shape[0]} points")
    state.ensure_cache(X)
    return X, y


def batches(n_points: int, batch_size: int, rng: np.random.Generator) -> List[Optional[NDArray[np.int64]]]:
    """Index sets for one pass over the data; [None] means the full batch."""
    if batch_size <= 0 or batch_size >= n_points:
        return [None]
    order = rng.permutation(n_points)
    return [np.sort(order[i:i + batch_size]) for i in range(0, n_points, batch_size)]


def snapshot(state: ModelState) -> Dict[str, Any]:
    vp = state.vp
    return {
        "mu": vp.mu.tolist(),
        "chol_sigma": vp.chol_sigma.tolist(),
        "alpha": vp.alpha.tolist(),
        "hyper": state.hyper.model_dump(),
    }


def epoch_objective(state: ModelState, X: NDArray[np.float64], y: NDArray[np.int64], epoch: int) -> float:
    try:
        value = elbo(state, X, y)
    except NumericalError as exc:
        raise TrainingAborted(
            f"objective became non-finite at epoch {epoch}: {exc}",
            index=exc.index,
            epoch=epoch,
            snapshot=snapshot(state),
        ) from exc
    return value


def abort(state: ModelState, epoch: int, exc: NumericalError) -> TrainingAborted:
    if isinstance(exc, TrainingAborted):
        return exc
    return TrainingAborted(
        f"training aborted at epoch {epoch}: {exc}",
        index=exc.index,
        epoch=epoch,
        snapshot=snapshot(state),
    )


def log_epoch(method: str, epoch: int, value: float, cfg: TrainConfig) -> None:
    logger.debug("%s epoch %d objective %.10g", method, epoch, value)
    if epoch % cfg.log_every == 0 or epoch == cfg.epochs:
        logger.info("%s epoch %d/%d objective %.6g", method, epoch, cfg.epochs, value)


def hyperopt_due(cfg: TrainConfig, epoch: int) -> bool:
    return cfg.hyperopt_every > 0 and epoch % cfg.hyperopt_every == 0


class Stopwatch:
    def __init__(self) -> None:
        self._start = time.perf_counter()

    def lap(self) -> float:
        now = time.perf_counter()
        elapsed, self._start = now - self._start, now
        return elapsed
