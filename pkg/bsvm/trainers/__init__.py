from __future__ import annotations

from numpy.typing import ArrayLike

from ..model_core import ModelState
from ..models import TrainConfig
from .adam import train_adam
from .common import TrainTrace
from .coord_ascent import train_coord_ascent, update_block
from .hyperopt import refine_hyperparams

__all__ = [
    "TrainTrace",
    "refine_hyperparams",
    "train",
    "train_adam",
    "train_coord_ascent",
    "update_block",
]


def train(state: ModelState, X: ArrayLike, y: ArrayLike, cfg: TrainConfig) -> tuple[ModelState, TrainTrace]:
    """Dispatch on cfg.method."""
    if cfg.method == "coord_ascent":
        return train_coord_ascent(state, X, y, cfg)
    return train_adam(state, X, y, cfg)
