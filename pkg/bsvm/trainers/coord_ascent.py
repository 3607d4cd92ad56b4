from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from ..errors import NumericalError
from ..model_core import (
    ModelState,
    alpha_closed_form,
    competitor_classes,
    moments_to_natural,
    natural_targets,
    natural_to_moments,
)
from ..models import TrainConfig
from .common import (
    Stopwatch,
    TrainTrace,
    abort,
    as_training_data,
    batches,
    epoch_objective,
    hyperopt_due,
    log_epoch,
)
from .hyperopt import refine_hyperparams

logger = logging.getLogger("bsvm.optim")


def update_block(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    j: int,
    rho: float,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
    max_halvings: int = 10,
) -> float:
    """Move class block j (0-based) a fraction rho of the way to its natural
    parameter targets. Returns the step size actually taken."""
    eta1_hat, eta2_hat = natural_targets(state, X, y, j, competitors=competitors, batch=batch)
    eta1, eta2 = moments_to_natural(state.vp.mu[j], state.vp.chol_sigma[j])
    step = rho
    for attempt in range(max_halvings + 1):
        new1 = (1.0 - step) * eta1 + step * eta1_hat
        new2 = (1.0 - step) * eta2 + step * eta2_hat
        try:
            mu, chol = natural_to_moments(new1, 0.5 * (new2 + new2.T))
        except NumericalError:
            if attempt == max_halvings:
                break
            logger.warning("class %d: -2*eta2 lost positive definiteness at rho=%g; halving", j + 1, step)
            step *= 0.5
            continue
        state.vp.mu[j] = mu
        state.vp.chol_sigma[j] = chol
        return step
    raise NumericalError(
        f"class {j + 1}: no positive-definite step after {max_halvings} halvings",
        index=j,
    )


def train_coord_ascent(state: ModelState, X: ArrayLike, y: ArrayLike, cfg: TrainConfig) -> tuple[ModelState, TrainTrace]:
    """Coordinate ascent on natural parameters.

    Each iteration: refresh competitor classes, then per batch set alpha to
    its closed form and update the class blocks one after another. Returns a
    new state; the input is not modified.
    """
    state = state.copy()
    X, y = as_training_data(state, X, y)
    trace = TrainTrace(method="coord_ascent")
    rng = np.random.default_rng(cfg.seed)
    watch = Stopwatch()
    step_count = 0

    for epoch in range(1, cfg.epochs + 1):
        try:
            competitors = competitor_classes(state, X, y)
            for batch in batches(X.shape[0], cfg.batch_size, rng):
                rho = cfg.rho_at(step_count)
                step_count += 1
                state.vp.alpha = alpha_closed_form(state, X, y, competitors=competitors, batch=batch)
                for j in range(state.n_classes):
                    update_block(
                        state, X, y, j, rho,
                        competitors=competitors,
                        batch=batch,
                        max_halvings=cfg.max_halvings,
                    )
            if hyperopt_due(cfg, epoch):
                refine_hyperparams(state, X, y, learning_rate=cfg.hyper_learning_rate)
        except NumericalError as exc:
            raise abort(state, epoch, exc) from exc
        value = epoch_objective(state, X, y, epoch)
        trace.record(value, watch.lap())
        log_epoch("coord_ascent", epoch, value, cfg)
    return state, trace
