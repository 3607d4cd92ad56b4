"""
Posterior predictive marginals of the class decision functions, the argmax
decision rule and the uncertainty scores built on them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import entr, softmax

from .errors import ConfigurationError, DomainError
from .kernel import KernelCache, build_cache, kernel_matrix
from .model_core import ModelState

DEFAULT_VR_SAMPLES = 128


@dataclass(frozen=True)
class PredictiveDistribution:
    means: NDArray[np.float64]
    variances: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.means.shape != self.variances.shape or self.means.ndim != 2:
            raise DomainError("means and variances must be matching T x C matrices")
        if np.any(self.variances <= 0):
            raise DomainError("predictive variances must be positive")

    @property
    def n_points(self) -> int:
        return int(self.means.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.means.shape[1])


def _prior_cache(state: ModelState) -> KernelCache:
    # Only K_PP and its factor are needed here.
    return build_cache(np.empty((0, state.Z.Z.shape[1])), state.Z, state.hyper)


def predict_dist(state: ModelState, X_test: ArrayLike) -> PredictiveDistribution:
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_test.ndim == 1:
        X_test = X_test[None, :]
    if X_test.ndim != 2 or X_test.shape[1] != state.Z.Z.shape[1]:
        raise DomainError(f"test inputs have {X_test.shape[-1]} columns, the model expects {state.Z.Z.shape[1]}")
    cache = state.cache if state.cache is not None and not state.stale else _prior_cache(state)
    K_TP = kernel_matrix(X_test, state.Z.Z, state.hyper)
    # A = K_TP K_PP^{-1}
    A = cache.solve_K_PP(K_TP.T).T
    means = A @ state.vp.mu.T
    prior_var = state.hyper.signal_variance - np.sum(K_TP * A, axis=1)
    # diag(A Sigma_j A^T) = ||A L_j||^2 row-wise
    proj = np.einsum("tp,jpq->jtq", A, state.vp.chol_sigma)
    posterior = np.sum(proj * proj, axis=2).T
    variances = np.maximum(prior_var[:, None] + posterior, cache.jitter)
    return PredictiveDistribution(means=means, variances=variances)


def decide(dist: PredictiveDistribution) -> NDArray[np.int64]:
    """Labels in 1..C; np.argmax keeps the first maximum, so ties go to the smallest class."""
    if dist.n_classes < 2:
        raise ConfigurationError("at least two classes are required")
    return np.argmax(dist.means, axis=1).astype(np.int64) + 1


def sample_votes(dist: PredictiveDistribution, S: int, seed: int) -> NDArray[np.int64]:
    """S x T matrix of argmax classes (1-based) of independent marginal draws."""
    if S < 1:
        raise ConfigurationError("the sample count must be >= 1")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((S, dist.n_points, dist.n_classes))
    draws = dist.means[None] + np.sqrt(dist.variances)[None] * noise
    return np.argmax(draws, axis=2).astype(np.int64) + 1


def variation_ratio_from_votes(votes: ArrayLike, n_classes: int) -> NDArray[np.float64]:
    votes = np.atleast_2d(np.asarray(votes, dtype=np.int64))
    S = votes.shape[0]
    counts = np.stack([(votes == c).sum(axis=0) for c in range(1, n_classes + 1)], axis=1)
    return 1.0 - counts.max(axis=1) / S


def variation_ratio(dist: PredictiveDistribution, S: int = DEFAULT_VR_SAMPLES, seed: int = 0) -> NDArray[np.float64]:
    return variation_ratio_from_votes(sample_votes(dist, S, seed), dist.n_classes)


def mean_softmax(dist: PredictiveDistribution) -> NDArray[np.float64]:
    return softmax(dist.means, axis=1)


def softmax_entropy(dist: PredictiveDistribution) -> NDArray[np.float64]:
    """Shannon entropy (nats) of the softmax over the predictive means."""
    return entr(mean_softmax(dist)).sum(axis=1)


def accuracy(predicted: ArrayLike, truth: ArrayLike) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ConfigurationError("prediction and truth lengths differ")
    return float(np.mean(predicted == truth)) if truth.size else float("nan")
