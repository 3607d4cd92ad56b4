"""
Type II refinement of the kernel hyperparameters and inducing inputs.

The objective is differentiated by central finite differences over
theta = (log lengthscales, log signal variance, vec(Z)); one ascent step is
taken with step-halving until the objective improves. The variational
parameters are held fixed while theta moves.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import NumericalError
from ..kernel import InducingInputs
from ..model_core import ModelState, competitor_classes, elbo
from ..models import KernelHyperparams

logger = logging.getLogger("bsvm.optim")

FD_STEP = 1e-4
MAX_BACKTRACKS = 10


def pack_theta(state: ModelState) -> NDArray[np.float64]:
    return np.concatenate(
        [
            np.log(np.asarray(state.hyper.lengthscale, dtype=np.float64)),
            [np.log(state.hyper.signal_variance)],
            state.Z.Z.ravel(),
        ]
    )


def unpack_theta(state: ModelState, theta: NDArray[np.float64]) -> tuple[KernelHyperparams, InducingInputs]:
    n_ls = len(state.hyper.lengthscale)
    hyper = KernelHyperparams(
        lengthscale=np.exp(theta[:n_ls]).tolist(),
        signal_variance=float(np.exp(theta[n_ls])),
        jitter=state.hyper.jitter,
    )
    Z = InducingInputs(theta[n_ls + 1:].reshape(state.Z.Z.shape))
    return hyper, Z


def _objective_at(
    state: ModelState,
    X: NDArray[np.float64],
    y: NDArray[np.int64],
    theta: NDArray[np.float64],
    competitors: NDArray[np.int64],
) -> float:
    trial = state.copy()
    try:
        hyper, Z = unpack_theta(state, theta)
        trial.set_hyperparams(hyper=hyper, Z=Z)
        trial.ensure_cache(X)
        return elbo(trial, X, y, competitors=competitors)
    except (NumericalError, ValueError, OverflowError):
        return -np.inf


def theta_gradient(
    state: ModelState,
    X: NDArray[np.float64],
    y: NDArray[np.int64],
    competitors: Optional[ArrayLike] = None,
) -> NDArray[np.float64]:
    if competitors is None:
        competitors = competitor_classes(state, X, y)
    competitors = np.asarray(competitors)
    theta = pack_theta(state)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        h = FD_STEP * max(1.0, abs(theta[i]))
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        f_up = _objective_at(state, X, y, up, competitors)
        f_down = _objective_at(state, X, y, down, competitors)
        if not (np.isfinite(f_up) and np.isfinite(f_down)):
            continue
        grad[i] = (f_up - f_down) / (2.0 * h)
    return grad


def refine_hyperparams(
    state: ModelState,
    X: NDArray[np.float64],
    y: NDArray[np.int64],
    *,
    learning_rate: float,
) -> bool:
    """One backtracking ascent step on theta. Returns True if the state moved."""
    competitors = competitor_classes(state, X, y)
    theta = pack_theta(state)
    current = _objective_at(state, X, y, theta, competitors)
    grad = theta_gradient(state, X, y, competitors)
    step = learning_rate
    for _ in range(MAX_BACKTRACKS + 1):
        candidate = theta + step * grad
        value = _objective_at(state, X, y, candidate, competitors)
        if np.isfinite(value) and value > current:
            hyper, Z = unpack_theta(state, candidate)
            state.set_hyperparams(hyper=hyper, Z=Z)
            state.ensure_cache(X)
            logger.debug("hyperparameter step %.3g raised objective %.10g -> %.10g", step, current, value)
            return True
        step *= 0.5
    logger.debug("hyperparameter step rejected after %d backtracks", MAX_BACKTRACKS)
    return False
