from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from ..errors import NumericalError
from ..model_core import (
    ModelState,
    alpha_closed_form,
    competitor_classes,
    grad_alpha,
    grad_chol_sigma,
    grad_mu,
)
from ..models import TrainConfig
from ..special_math import floor_alpha
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


def softplus(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.logaddexp(0.0, x)


def inv_softplus(y: NDArray[np.float64]) -> NDArray[np.float64]:
    return y + np.log(-np.expm1(-y))


@dataclass
class AdamMoments:
    m: NDArray[np.float64]
    v: NDArray[np.float64]
    steps: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamMoments":
        return cls(np.zeros(size), np.zeros(size))

    def ascent_step(self, grad: NDArray[np.float64], cfg: TrainConfig) -> NDArray[np.float64]:
        self.steps += 1
        self.m = cfg.adam_beta1 * self.m + (1.0 - cfg.adam_beta1) * grad
        self.v = cfg.adam_beta2 * self.v + (1.0 - cfg.adam_beta2) * grad * grad
        m_hat = self.m / (1.0 - cfg.adam_beta1 ** self.steps)
        v_hat = self.v / (1.0 - cfg.adam_beta2 ** self.steps)
        return cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


class _Unconstrained:
    """Flat view of (mu, L) with the diagonal of every L_j stored through
    an inverse softplus, plus log alpha when alpha is gradient-driven."""

    def __init__(self, state: ModelState, with_alpha: bool) -> None:
        C, P = state.vp.mu.shape
        self.shape_mu = (C, P)
        self.tril = np.tril_indices(P)
        self.diag_mask = self.tril[0] == self.tril[1]
        self.with_alpha = with_alpha
        self.n_alpha = state.vp.alpha.size if with_alpha else 0

    def pack(self, state: ModelState) -> NDArray[np.float64]:
        vp = state.vp
        L = vp.chol_sigma[:, self.tril[0], self.tril[1]].copy()
        L[:, self.diag_mask] = inv_softplus(L[:, self.diag_mask])
        parts = [vp.mu.ravel(), L.ravel()]
        if self.with_alpha:
            parts.append(np.log(vp.alpha))
        return np.concatenate(parts)

    def unpack_into(self, state: ModelState, theta: NDArray[np.float64]) -> None:
        C, P = self.shape_mu
        n_mu = C * P
        n_l = C * self.tril[0].size
        state.vp.mu = theta[:n_mu].reshape(C, P).copy()
        raw = theta[n_mu:n_mu + n_l].reshape(C, -1).copy()
        raw[:, self.diag_mask] = softplus(raw[:, self.diag_mask])
        chol = np.zeros((C, P, P))
        chol[:, self.tril[0], self.tril[1]] = raw
        state.vp.chol_sigma = chol
        if self.with_alpha:
            state.vp.alpha = floor_alpha(np.exp(theta[n_mu + n_l:]))

    def gradient(self, state: ModelState, X, y, competitors, batch) -> NDArray[np.float64]:
        g_mu = grad_mu(state, X, y, competitors=competitors, batch=batch)
        g_chol = grad_chol_sigma(state, X, y, competitors=competitors, batch=batch)
        g_l = g_chol[:, self.tril[0], self.tril[1]]
        diag = state.vp.chol_sigma[:, self.tril[0], self.tril[1]][:, self.diag_mask]
        # d softplus(r) / dr = sigmoid(r), with r = inv_softplus(diag)
        g_l[:, self.diag_mask] *= expit(inv_softplus(diag))
        parts = [g_mu.ravel(), g_l.ravel()]
        if self.with_alpha:
            parts.append(grad_alpha(state, X, y, competitors=competitors, batch=batch) * state.vp.alpha)
        return np.concatenate(parts)


def train_adam(state: ModelState, X: ArrayLike, y: ArrayLike, cfg: TrainConfig) -> tuple[ModelState, TrainTrace]:
    """Ascend the objective with Adam on (mu, chol Sigma).

    Per epoch the competitor classes are refreshed once; per batch alpha is
    set to its stationary point (or moved by Adam under the gradient ablation)
    before one Adam step. Returns a new state; the input is not modified.
    """
    state = state.copy()
    X, y = as_training_data(state, X, y)
    trace = TrainTrace(method="adam")
    rng = np.random.default_rng(cfg.seed)
    gradient_alpha = cfg.alpha_update == "gradient"
    view = _Unconstrained(state, with_alpha=gradient_alpha)
    moments = AdamMoments.zeros(view.pack(state).size)
    watch = Stopwatch()

    for epoch in range(1, cfg.epochs + 1):
        try:
            competitors = competitor_classes(state, X, y)
            for batch in batches(X.shape[0], cfg.batch_size, rng):
                if not gradient_alpha:
                    state.vp.alpha = alpha_closed_form(state, X, y, competitors=competitors, batch=batch)
                grad = view.gradient(state, X, y, competitors, batch)
                theta = view.pack(state) + moments.ascent_step(grad, cfg)
                if not np.all(np.isfinite(theta)):
                    raise NumericalError("Adam step produced non-finite parameters")
                view.unpack_into(state, theta)
            if hyperopt_due(cfg, epoch):
                refine_hyperparams(state, X, y, learning_rate=cfg.hyper_learning_rate)
        except NumericalError as exc:
            raise abort(state, epoch, exc) from exc
        value = epoch_objective(state, X, y, epoch)
        trace.record(value, watch.lap())
        log_epoch("adam", epoch, value, cfg)
    return state, trace
