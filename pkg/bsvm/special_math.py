"""
Closed forms for the order-1/2 modified Bessel function of the second kind
and the moments of GIG(1/2, 1, alpha).

K_{1/2}(x) = sqrt(pi / (2x)) * exp(-x), so everything here is elementary.
The log-space variant is what the objective uses; it stays finite where the
plain value underflows.
"""
from __future__ import annotations

from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError
from .models import MIN_ALPHA, GigParams

FloatOrArray = Union[float, NDArray[np.float64]]

_HALF_LOG_PI_OVER_2 = 0.5 * np.log(np.pi / 2.0)


def _positive(x: ArrayLike, name: str = "x") -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(arr <= 0):
        raise DomainError(f"{name} must be > 0")
    return arr


def _unwrap(arr: NDArray[np.float64]) -> FloatOrArray:
    return float(arr) if arr.ndim == 0 else arr


def log_bessel_k_half(x: ArrayLike) -> FloatOrArray:
    arr = _positive(x)
    return _unwrap(_HALF_LOG_PI_OVER_2 - 0.5 * np.log(arr) - arr)


def bessel_k_half(x: ArrayLike) -> FloatOrArray:
    arr = _positive(x)
    return _unwrap(np.sqrt(np.pi / (2.0 * arr)) * np.exp(-arr))


def gig_mean(p: GigParams) -> float:
    """E[lambda] under GIG(1/2, 1, alpha)."""
    return float(np.sqrt(p.alpha) + 1.0)


def gig_inv_mean(p: GigParams) -> float:
    """E[1/lambda] under GIG(1/2, 1, alpha)."""
    return float(p.alpha ** -0.5)


def floor_alpha(alpha: ArrayLike) -> NDArray[np.float64]:
    return np.maximum(np.asarray(alpha, dtype=np.float64), MIN_ALPHA)
