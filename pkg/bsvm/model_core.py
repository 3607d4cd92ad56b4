"""
Variational parameter containers, the training objective and its Euclidean
gradients.

Class labels enter the public functions as integers in 1..C; internally
they are shifted to 0-based row indices of the parameter blocks. Every
application of K_PP^{-1} goes through the Cholesky factor held in the
kernel cache, i.e. it is (K_PP + jitter I)^{-1}.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_solve, cholesky

from .errors import ConfigurationError, NumericalError
from .kernel import InducingInputs, KernelCache, build_cache, init_hyperparams, init_inducing
from .models import MIN_ALPHA, KernelHyperparams, StandardizationStats
from .special_math import floor_alpha, log_bessel_k_half


@dataclass
class VariationalParams:
    mu: NDArray[np.float64]
    chol_sigma: NDArray[np.float64]
    alpha: NDArray[np.float64]

    @classmethod
    def initial(cls, n_classes: int, n_inducing: int, n_points: int) -> "VariationalParams":
        return cls(
            mu=np.zeros((n_classes, n_inducing)),
            chol_sigma=np.tile(np.eye(n_inducing), (n_classes, 1, 1)),
            alpha=np.ones(n_points),
        )

    @property
    def n_classes(self) -> int:
        return int(self.mu.shape[0])

    @property
    def n_inducing(self) -> int:
        return int(self.mu.shape[1])

    def sigma(self) -> NDArray[np.float64]:
        return self.chol_sigma @ np.swapaxes(self.chol_sigma, 1, 2)

    def copy(self) -> "VariationalParams":
        return VariationalParams(self.mu.copy(), self.chol_sigma.copy(), self.alpha.copy())

    def check(self) -> None:
        diag = np.diagonal(self.chol_sigma, axis1=1, axis2=2)
        if np.any(diag <= 0):
            j = int(np.argwhere(diag <= 0)[0, 0])
            raise NumericalError(f"Cholesky factor of class {j + 1} has a non-positive diagonal", index=j)
        if np.any(self.alpha < MIN_ALPHA):
            n = int(np.argmin(self.alpha))
            raise NumericalError(f"alpha[{n}] below floor {MIN_ALPHA:g}", index=n)


def moments_to_natural(mu: NDArray[np.float64], chol_sigma: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    precision = cho_solve((chol_sigma, True), np.eye(chol_sigma.shape[0]))
    precision = 0.5 * (precision + precision.T)
    return precision @ mu, -0.5 * precision


def natural_to_moments(eta1: NDArray[np.float64], eta2: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Recover (mu, chol Sigma) of one block from its natural parameters."""
    precision = -2.0 * eta2
    precision = 0.5 * (precision + precision.T)
    eye = np.eye(precision.shape[0])
    try:
        chol_prec = cholesky(precision, lower=True)
        sigma = cho_solve((chol_prec, True), eye)
        sigma = 0.5 * (sigma + sigma.T)
        chol_sigma = cholesky(sigma, lower=True)
    except LinAlgError as exc:
        raise NumericalError("-2 * eta2 is not positive definite") from exc
    mu = cho_solve((chol_prec, True), eta1)
    return mu, chol_sigma


@dataclass
class NaturalParams:
    eta1: NDArray[np.float64]
    eta2: NDArray[np.float64]

    @classmethod
    def from_variational(cls, vp: VariationalParams) -> "NaturalParams":
        eta1 = np.empty_like(vp.mu)
        eta2 = np.empty_like(vp.chol_sigma)
        for j in range(vp.n_classes):
            eta1[j], eta2[j] = moments_to_natural(vp.mu[j], vp.chol_sigma[j])
        return cls(eta1=eta1, eta2=eta2)

    def to_variational(self, alpha: NDArray[np.float64]) -> VariationalParams:
        mu = np.empty_like(self.eta1)
        chol = np.empty_like(self.eta2)
        for j in range(self.eta1.shape[0]):
            mu[j], chol[j] = natural_to_moments(self.eta1[j], self.eta2[j])
        return VariationalParams(mu=mu, chol_sigma=chol, alpha=np.asarray(alpha, dtype=np.float64).copy())


def _same_inputs(cached: Optional[NDArray[np.float64]], X: NDArray[np.float64]) -> bool:
    return cached is not None and cached.shape == X.shape and np.array_equal(cached, X)


@dataclass
class ModelState:
    hyper: KernelHyperparams
    Z: InducingInputs
    vp: VariationalParams
    n_classes: int
    cache: Optional[KernelCache] = None
    stale: bool = True
    standardization: StandardizationStats = field(default_factory=StandardizationStats)
    label_names: List[str] = field(default_factory=list)
    cache_inputs: Optional[NDArray[np.float64]] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ConfigurationError(f"at least two classes are required, got {self.n_classes}")
        if self.vp.n_classes != self.n_classes:
            raise ConfigurationError("variational parameters do not match the class count")
        if self.vp.n_inducing != self.Z.count:
            raise ConfigurationError("variational parameters do not match the inducing inputs")

    @classmethod
    def initialize(
        cls,
        X: ArrayLike,
        n_classes: int,
        n_inducing: int,
        *,
        seed: int = 0,
        ard: bool = False,
        jitter: Optional[float] = None,
        hyper: Optional[KernelHyperparams] = None,
    ) -> "ModelState":
        X = np.asarray(X, dtype=np.float64)
        if n_classes < 2:
            raise ConfigurationError(f"at least two classes are required, got {n_classes}")
        hyper = hyper or init_hyperparams(X, ard=ard, jitter=jitter, seed=seed)
        Z = init_inducing(X, n_inducing, seed=seed)
        state = cls(
            hyper=hyper,
            Z=Z,
            vp=VariationalParams.initial(n_classes, Z.count, X.shape[0]),
            n_classes=n_classes,
        )
        state.ensure_cache(X)
        return state

    def set_hyperparams(self, hyper: Optional[KernelHyperparams] = None, Z: Optional[InducingInputs] = None) -> None:
        if hyper is not None:
            self.hyper = hyper
        if Z is not None:
            if Z.count != self.Z.count:
                raise ConfigurationError("the number of inducing inputs cannot change")
            self.Z = Z
        self.stale = True

    def ensure_cache(self, X: ArrayLike) -> KernelCache:
        """The kernel cache for X, rebuilt when X or the hyperparameters changed."""
        X = np.asarray(X, dtype=np.float64)
        if self.stale or self.cache is None or not _same_inputs(self.cache_inputs, X):
            self.cache = build_cache(X, self.Z, self.hyper)
            self.cache_inputs = X.copy()
            self.stale = False
        return self.cache

    def copy(self) -> "ModelState":
        out = copy.copy(self)
        out.vp = self.vp.copy()
        out.label_names = list(self.label_names)
        return out


# ---------------------------------------------------------------------------
# Shared per-sample terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Terms:
    cache: KernelCache
    idx: NDArray[np.int64]
    scale: float
    kappa: NDArray[np.float64]
    y: NDArray[np.int64]
    t: NDArray[np.int64]
    margin: NDArray[np.float64]
    Q: NDArray[np.float64]
    alpha: NDArray[np.float64]


def labels_to_index(y: ArrayLike, n_classes: int) -> NDArray[np.int64]:
    y = np.asarray(y)
    if y.size and (not np.issubdtype(y.dtype, np.integer)):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ConfigurationError("labels must be integers in 1..C")
    y0 = y.astype(np.int64) - 1
    if y0.size and (y0.min() < 0 or y0.max() >= n_classes):
        raise ConfigurationError(f"labels must lie in 1..{n_classes}")
    return y0


def _competitors(kappa: NDArray[np.float64], mu: NDArray[np.float64], y0: NDArray[np.int64]) -> NDArray[np.int64]:
    means = kappa @ mu.T
    means[np.arange(y0.size), y0] = -np.inf
    # argmax returns the first maximum, i.e. the smallest class index on ties
    return np.argmax(means, axis=1).astype(np.int64)


def _terms(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> _Terms:
    cache = state.ensure_cache(X)
    n_points = cache.n_points
    y0 = labels_to_index(y, state.n_classes)
    if y0.size != n_points:
        raise ConfigurationError(f"{y0.size} labels for {n_points} training points")
    if state.vp.alpha.size != n_points:
        raise ConfigurationError(f"{state.vp.alpha.size} alpha entries for {n_points} training points")
    if batch is None:
        idx = np.arange(n_points)
        scale = 1.0
    else:
        idx = np.asarray(batch, dtype=np.int64)
        scale = n_points / idx.size if idx.size else 1.0
    kappa = cache.kappa[idx]
    yb = y0[idx]
    if competitors is None:
        tb = _competitors(kappa, state.vp.mu, yb)
    else:
        tb = labels_to_index(competitors, state.n_classes)[idx]
    mu = state.vp.mu
    margin = np.sum(kappa * (mu[tb] - mu[yb]), axis=1)
    # quad[j, b] = kappa_b Sigma_j kappa_b^T
    proj = np.einsum("bp,jpq->jbq", kappa, state.vp.chol_sigma)
    quad = np.sum(proj * proj, axis=2)
    rows = np.arange(idx.size)
    Q = 2.0 * cache.ktilde_diag[idx] + (1.0 + margin) ** 2 + quad[tb, rows] + quad[yb, rows]
    alpha = state.vp.alpha[idx]
    if np.any(~np.isfinite(alpha)) or np.any(alpha < MIN_ALPHA):
        bad = int(np.flatnonzero(~np.isfinite(alpha) | (alpha < MIN_ALPHA))[0])
        raise NumericalError(f"alpha[{idx[bad]}] is outside [{MIN_ALPHA:g}, inf)", index=int(idx[bad]))
    return _Terms(cache, idx, scale, kappa, yb, tb, margin, Q, alpha)


def _first_bad(values: NDArray[np.float64]) -> Optional[int]:
    bad = np.flatnonzero(~np.isfinite(values))
    return int(bad[0]) if bad.size else None


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def competitor_classes(state: ModelState, X: ArrayLike, y: ArrayLike) -> NDArray[np.int64]:
    """t_n for every training point, as labels in 1..C."""
    cache = state.ensure_cache(X)
    y0 = labels_to_index(y, state.n_classes)
    return _competitors(cache.kappa, state.vp.mu, y0) + 1


def competitor_class(state: ModelState, X: ArrayLike, y: ArrayLike, n: int) -> int:
    cache = state.ensure_cache(X)
    y0 = labels_to_index(y, state.n_classes)
    return int(_competitors(cache.kappa[n:n + 1], state.vp.mu, y0[n:n + 1])[0]) + 1


def kl_terms(vp: VariationalParams, cache: KernelCache) -> NDArray[np.float64]:
    """Per class: -log|Sigma_j| + trace(K_PP^{-1} Sigma_j) + mu_j^T K_PP^{-1} mu_j."""
    out = np.empty(vp.n_classes)
    for j in range(vp.n_classes):
        L = vp.chol_sigma[j]
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        W = cache.whiten(L)
        v = cache.whiten(vp.mu[j])
        out[j] = -logdet + np.sum(W * W) + float(v @ v)
    return out


def elbo(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> float:
    tm = _terms(state, X, y, competitors, batch)
    sqrt_a = np.sqrt(tm.alpha)
    if tm.alpha.size:
        data = (
            -(tm.Q - tm.alpha) / (2.0 * sqrt_a)
            - tm.margin
            + 0.25 * np.log(tm.alpha)
            + np.asarray(log_bessel_k_half(sqrt_a))
        )
    else:
        data = np.zeros(0)
    bad = _first_bad(data)
    if bad is not None:
        n = int(tm.idx[bad])
        raise NumericalError(f"objective term for n={n} is not finite", index=n)
    kl = kl_terms(state.vp, tm.cache)
    bad = _first_bad(kl)
    if bad is not None:
        raise NumericalError(f"KL term for class {bad + 1} is not finite", index=bad)
    return float(tm.scale * np.sum(data) - 0.5 * np.sum(kl))


def grad_mu(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> NDArray[np.float64]:
    tm = _terms(state, X, y, competitors, batch)
    coef = (1.0 + tm.margin) / np.sqrt(tm.alpha) + 1.0
    contrib = coef[:, None] * tm.kappa
    g = np.zeros_like(state.vp.mu)
    np.add.at(g, tm.t, -contrib)
    np.add.at(g, tm.y, contrib)
    g = tm.scale * g - tm.cache.solve_K_PP(state.vp.mu.T).T
    bad = _first_bad(g.sum(axis=1))
    if bad is not None:
        raise NumericalError(f"mu gradient for class {bad + 1} is not finite", index=bad)
    return g


def grad_sigma(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> NDArray[np.float64]:
    """dO/dSigma_j for every class, as symmetric P x P blocks."""
    tm = _terms(state, X, y, competitors, batch)
    eye = np.eye(state.vp.n_inducing)
    K_inv = tm.cache.solve_K_PP(eye)
    weight = tm.scale / (2.0 * np.sqrt(tm.alpha))
    out = np.empty_like(state.vp.chol_sigma)
    for j in range(state.n_classes):
        involved = (tm.t == j) | (tm.y == j)
        k = tm.kappa[involved]
        G = -(k * weight[involved, None]).T @ k
        sigma_inv = cho_solve((state.vp.chol_sigma[j], True), eye)
        G = G - 0.5 * (-sigma_inv + K_inv)
        out[j] = 0.5 * (G + G.T)
    bad = _first_bad(out.reshape(state.n_classes, -1).sum(axis=1))
    if bad is not None:
        raise NumericalError(f"Sigma gradient for class {bad + 1} is not finite", index=bad)
    return out


def grad_chol_sigma(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> NDArray[np.float64]:
    G = grad_sigma(state, X, y, competitors=competitors, batch=batch)
    return np.tril((G + np.swapaxes(G, 1, 2)) @ state.vp.chol_sigma)


def grad_alpha(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> NDArray[np.float64]:
    tm = _terms(state, X, y, competitors, batch)
    sqrt_a = np.sqrt(tm.alpha)
    g = np.zeros_like(state.vp.alpha)
    g[tm.idx] = tm.scale * (tm.Q / (4.0 * sqrt_a ** 3) - 1.0 / (4.0 * sqrt_a))
    bad = _first_bad(g)
    if bad is not None:
        raise NumericalError(f"alpha gradient for n={bad} is not finite", index=bad)
    return g


def alpha_closed_form(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> NDArray[np.float64]:
    """Stationary alpha_n = Q_n (floored); entries outside the batch keep their value."""
    tm = _terms(state, X, y, competitors, batch)
    out = state.vp.alpha.copy()
    out[tm.idx] = floor_alpha(tm.Q)
    return out


def natural_targets(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    j: int,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Natural parameters (eta1, eta2) of class block j (0-based) that zero the
    block's gradients with alpha, t_n and every other block held fixed."""
    tm = _terms(state, X, y, competitors, batch)
    eye = np.eye(state.vp.n_inducing)
    inv_sqrt_a = 1.0 / np.sqrt(tm.alpha)
    as_t = tm.t == j
    as_y = tm.y == j
    involved = as_t | as_y
    k = tm.kappa[involved]
    precision = tm.cache.solve_K_PP(eye) + tm.scale * (k * inv_sqrt_a[involved, None]).T @ k
    eta2 = -0.25 * (precision + precision.T)
    mu = state.vp.mu
    proj_t = np.sum(tm.kappa * mu[tm.t], axis=1)
    proj_y = np.sum(tm.kappa * mu[tm.y], axis=1)
    coef = np.zeros(tm.idx.size)
    coef[as_y] = (1.0 + proj_t[as_y]) * inv_sqrt_a[as_y] + 1.0
    coef[as_t] = -((1.0 - proj_y[as_t]) * inv_sqrt_a[as_t] + 1.0)
    eta1 = tm.scale * (tm.kappa.T @ coef)
    return eta1, eta2


def natural_gradients(
    state: ModelState,
    X: ArrayLike,
    y: ArrayLike,
    j: int,
    *,
    competitors: Optional[ArrayLike] = None,
    batch: Optional[Sequence[int]] = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Natural gradients of O w.r.t. (eta1_j, eta2_j)."""
    G = grad_sigma(state, X, y, competitors=competitors, batch=batch)[j]
    g_mu = grad_mu(state, X, y, competitors=competitors, batch=batch)[j]
    return g_mu - 2.0 * G @ state.vp.mu[j], G


def rebuild_cache(state: ModelState, X: ArrayLike) -> KernelCache:
    state.stale = True
    return state.ensure_cache(X)


__all__ = [
    "ModelState",
    "NaturalParams",
    "VariationalParams",
    "alpha_closed_form",
    "rebuild_cache",
    "competitor_class",
    "competitor_classes",
    "elbo",
    "grad_alpha",
    "grad_chol_sigma",
    "grad_mu",
    "grad_sigma",
    "kl_terms",
    "labels_to_index",
    "natural_gradients",
    "natural_targets",
    "moments_to_natural",
    "natural_to_moments",
]
