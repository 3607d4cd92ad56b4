from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.cluster.vq import kmeans2
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist

from .errors import DomainError, NumericalError, SingularKernelError
from .models import KernelHyperparams

logger = logging.getLogger("bsvm.kernel")

MAX_JITTER = 1e-2
KTILDE_TOLERANCE = 1e-8
DUPLICATE_TOLERANCE = 1e-12
MEDIAN_SUBSAMPLE = 256
KMEANS_ITERATIONS = 25
DUPLICATE_PERTURBATION = 1e-6
EMPTY_CLUSTER_MESSAGE = "One of the clusters is empty"


def ignore_empty_cluster_warnings() -> None:
    """Silence kmeans2's empty-cluster warning; the cluster keeps its previous centroid."""
    warnings.filterwarnings("ignore", message=EMPTY_CLUSTER_MESSAGE, category=UserWarning)


ignore_empty_cluster_warnings()


@dataclass(frozen=True)
class InducingInputs:
    Z: NDArray[np.float64]

    def __post_init__(self) -> None:
        Z = np.atleast_2d(np.asarray(self.Z, dtype=np.float64))
        if Z.shape[0] < 1:
            raise DomainError("at least one inducing input is required")
        if not np.all(np.isfinite(Z)):
            raise DomainError("inducing inputs must be finite")
        object.__setattr__(self, "Z", Z)

    @property
    def count(self) -> int:
        return int(self.Z.shape[0])

    def duplicate_pairs(self, tol: float = DUPLICATE_TOLERANCE) -> List[tuple[int, int]]:
        pairs = []
        for i in range(self.count):
            close = np.all(np.abs(self.Z[i + 1:] - self.Z[i]) <= tol, axis=1)
            pairs.extend((i, i + 1 + int(k)) for k in np.flatnonzero(close))
        return pairs


@dataclass(frozen=True)
class KernelCache:
    K_PP: NDArray[np.float64]
    chol_K_PP: NDArray[np.float64]
    K_NP: NDArray[np.float64]
    kappa: NDArray[np.float64]
    ktilde_diag: NDArray[np.float64]
    jitter: float

    @property
    def n_points(self) -> int:
        return int(self.K_NP.shape[0])

    @property
    def n_inducing(self) -> int:
        return int(self.K_PP.shape[0])

    def solve_K_PP(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """(K_PP + jitter I)^{-1} rhs through two triangular solves."""
        tmp = solve_triangular(self.chol_K_PP, rhs, lower=True)
        return solve_triangular(self.chol_K_PP.T, tmp, lower=False)

    def whiten(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """chol_K_PP^{-1} rhs."""
        return solve_triangular(self.chol_K_PP, rhs, lower=True)


def _as_matrix(x: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DomainError(f"{name} must be a matrix")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def kernel_matrix(A: ArrayLike, B: ArrayLike, h: KernelHyperparams) -> NDArray[np.float64]:
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DomainError(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    ls = h.lengthscales(A.shape[1])
    sq = cdist(A / ls, B / ls, metric="sqeuclidean")
    return h.signal_variance * np.exp(-0.5 * sq)


def eval_kernel(x1: ArrayLike, x2: ArrayLike, h: KernelHyperparams) -> float:
    a = np.atleast_1d(np.asarray(x1, dtype=np.float64))
    b = np.atleast_1d(np.asarray(x2, dtype=np.float64))
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(kernel_matrix(a[None, :], b[None, :], h)[0, 0])


def _stable_cholesky(K: NDArray[np.float64], jitter: float, Z: InducingInputs) -> tuple[NDArray[np.float64], float]:
    eye = np.eye(K.shape[0])
    current = jitter
    while True:
        try:
            return cholesky(K + current * eye, lower=True), current
        except LinAlgError:
            if current >= MAX_JITTER:
                break
            nxt = min(current * 2.0, MAX_JITTER)
            logger.warning("K_PP not positive definite at jitter=%g; retrying with %g", current, nxt)
            current = nxt
    dups = Z.duplicate_pairs(tol=1e-6)
    detail = ", ".join(f"rows {i} and {j}" for i, j in dups) or "no near-duplicate rows found"
    raise SingularKernelError(
        f"K_PP stayed singular up to jitter={MAX_JITTER:g}; duplicate inducing points: {detail}",
        duplicates=dups,
    )


def build_cache(X: ArrayLike, Z: InducingInputs, h: KernelHyperparams) -> KernelCache:
    X = np.asarray(X, dtype=np.float64).reshape(-1, Z.Z.shape[1]) if np.size(X) == 0 else _as_matrix(X, "X")
    if X.shape[1] != Z.Z.shape[1]:
        raise DomainError(f"X has {X.shape[1]} columns but Z has {Z.Z.shape[1]}")
    K_PP = kernel_matrix(Z.Z, Z.Z, h)
    chol, jitter = _stable_cholesky(K_PP, h.jitter, Z)
    K_NP = kernel_matrix(X, Z.Z, h)
    # kappa^T = K_PP^{-1} K_PN, via the two triangular solves.
    tmp = solve_triangular(chol, K_NP.T, lower=True)
    kappa = solve_triangular(chol.T, tmp, lower=False).T
    ktilde = h.signal_variance - np.sum(K_NP * kappa, axis=1)
    worst = int(np.argmin(ktilde)) if ktilde.size else -1
    if ktilde.size and ktilde[worst] < -KTILDE_TOLERANCE * h.signal_variance:
        raise NumericalError(f"diag(K~) is negative at n={worst}: {ktilde[worst]:.3e}", index=worst)
    ktilde = np.maximum(ktilde, 0.0)
    return KernelCache(K_PP=K_PP, chol_K_PP=chol, K_NP=K_NP, kappa=kappa, ktilde_diag=ktilde, jitter=jitter)


def median_lengthscale(X: ArrayLike, seed: int = 0, subsample: int = MEDIAN_SUBSAMPLE) -> float:
    X = _as_matrix(X, "X")
    if X.shape[0] > subsample:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(X.shape[0], size=subsample, replace=False))]
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 and np.isfinite(med) else 1.0


def init_hyperparams(
    X: ArrayLike,
    *,
    ard: bool = False,
    jitter: Optional[float] = None,
    seed: int = 0,
) -> KernelHyperparams:
    X = _as_matrix(X, "X")
    ls = median_lengthscale(X, seed=seed)
    kwargs = {"jitter": jitter} if jitter is not None else {}
    return KernelHyperparams(
        lengthscale=[ls] * (X.shape[1] if ard else 1),
        signal_variance=1.0,
        **kwargs,
    )


def _separate_duplicates(Z: NDArray[np.float64], rng: np.random.Generator) -> NDArray[np.float64]:
    Z = Z.copy()
    for i in range(1, Z.shape[0]):
        while np.any(np.all(np.abs(Z[:i] - Z[i]) <= DUPLICATE_TOLERANCE, axis=1)):
            Z[i] = Z[i] + DUPLICATE_PERTURBATION * rng.standard_normal(Z.shape[1])
    return Z


def init_inducing(X: ArrayLike, n_inducing: int, seed: int = 0) -> InducingInputs:
    """k-means centroids of X, or X itself when it has no more rows than requested."""
    X = _as_matrix(X, "X")
    if n_inducing < 1:
        raise DomainError("n_inducing must be >= 1")
    rng = np.random.default_rng(seed)
    if n_inducing >= X.shape[0]:
        return InducingInputs(_separate_duplicates(X, rng))
    centroids, _ = kmeans2(X, n_inducing, iter=KMEANS_ITERATIONS, minit="++", missing="warn", seed=rng)
    return InducingInputs(_separate_duplicates(np.asarray(centroids, dtype=np.float64), rng))
