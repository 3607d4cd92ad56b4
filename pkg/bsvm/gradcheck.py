"""
Central finite-difference verification of the analytic gradients.

Competitor classes are computed once from the unperturbed state and passed
to every objective evaluation, so the objective is smooth in every
coordinate being probed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from numpy.typing import NDArray

from .kernel import InducingInputs
from .model_core import (
    ModelState,
    VariationalParams,
    competitor_classes,
    elbo,
    grad_alpha,
    grad_chol_sigma,
    grad_mu,
)
from .models import KernelHyperparams

FD_STEP = 1e-6
TOLERANCE = 1e-5


def relative_error(analytic: NDArray[np.float64], numeric: NDArray[np.float64]) -> NDArray[np.float64]:
    a, f = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(1.0, np.maximum(a, f))


@dataclass
class BlockResult:
    name: str
    max_rel_error: float
    worst_index: tuple[int, ...]
    analytic: float
    numeric: float

    def line(self) -> str:
        return (
            f"{self.name:<10} max_rel_error={self.max_rel_error:.3e} "
            f"worst={self.worst_index} analytic={self.analytic:.10g} numeric={self.numeric:.10g}"
        )


@dataclass
class GradcheckReport:
    seed: int
    blocks: Dict[str, BlockResult] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return all(b.max_rel_error <= self.tolerance for b in self.blocks.values())

    @property
    def worst(self) -> Optional[BlockResult]:
        if not self.blocks:
            return None
        return max(self.blocks.values(), key=lambda b: b.max_rel_error)

    def format(self) -> str:
        lines = [f"gradcheck seed={self.seed} tolerance={self.tolerance:g}"]
        lines.extend(b.line() for b in self.blocks.values())
        lines.append("PASS" if self.passed else f"FAIL at {self.worst.name}{self.worst.worst_index}")
        return "\n".join(lines)


def random_state(
    seed: int,
    *,
    n_points: int = 20,
    n_classes: int = 3,
    n_inducing: int = 5,
    dims: int = 2,
) -> tuple[ModelState, NDArray[np.float64], NDArray[np.int64]]:
    """A seeded random (state, X, y) instance with non-trivial parameters."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_points, dims))
    y = rng.integers(1, n_classes + 1, size=n_points).astype(np.int64)
    Z = InducingInputs(rng.standard_normal((n_inducing, dims)))
    hyper = KernelHyperparams(lengthscale=[1.0 + 0.5 * rng.random()], signal_variance=1.0 + rng.random())
    chol = np.tril(0.1 * rng.standard_normal((n_classes, n_inducing, n_inducing)), k=-1)
    chol += np.einsum("jp,pq->jpq", 0.5 + rng.random((n_classes, n_inducing)), np.eye(n_inducing))
    vp = VariationalParams(
        mu=0.5 * rng.standard_normal((n_classes, n_inducing)),
        chol_sigma=chol,
        alpha=0.5 + 1.5 * rng.random(n_points),
    )
    state = ModelState(hyper=hyper, Z=Z, vp=vp, n_classes=n_classes)
    state.ensure_cache(X)
    return state, X, y


def _numeric_gradient(
    objective: Callable[[], float],
    target: NDArray[np.float64],
    indices: list[tuple[int, ...]],
) -> NDArray[np.float64]:
    out = np.zeros(len(indices))
    for k, idx in enumerate(indices):
        orig = target[idx]
        h = FD_STEP * (1.0 + abs(orig))
        target[idx] = orig + h
        f_up = objective()
        target[idx] = orig - h
        f_down = objective()
        target[idx] = orig
        out[k] = (f_up - f_down) / (2.0 * h)
    return out


def _block(name: str, analytic: NDArray[np.float64], numeric: NDArray[np.float64], indices) -> BlockResult:
    err = relative_error(analytic, numeric)
    k = int(np.argmax(err)) if err.size else 0
    return BlockResult(
        name=name,
        max_rel_error=float(err[k]) if err.size else 0.0,
        worst_index=tuple(int(i) for i in indices[k]) if err.size else (),
        analytic=float(analytic[k]) if err.size else 0.0,
        numeric=float(numeric[k]) if err.size else 0.0,
    )


def check_gradients(
    state: ModelState,
    X: NDArray[np.float64],
    y: NDArray[np.int64],
    *,
    seed: int = 0,
    perturb_analytic: float = 0.0,
    tolerance: float = TOLERANCE,
) -> GradcheckReport:
    state = state.copy()
    competitors = competitor_classes(state, X, y)

    def objective() -> float:
        return elbo(state, X, y, competitors=competitors)

    vp = state.vp
    report = GradcheckReport(seed=seed, tolerance=tolerance)

    mu_idx = [tuple(i) for i in np.ndindex(vp.mu.shape)]
    g = grad_mu(state, X, y, competitors=competitors)
    analytic = np.array([g[i] for i in mu_idx]) + perturb_analytic
    report.blocks["mu"] = _block("mu", analytic, _numeric_gradient(objective, vp.mu, mu_idx), mu_idx)

    P = vp.n_inducing
    chol_idx = [(j, p, q) for j in range(vp.n_classes) for p in range(P) for q in range(p + 1)]
    g = grad_chol_sigma(state, X, y, competitors=competitors)
    analytic = np.array([g[i] for i in chol_idx]) + perturb_analytic
    report.blocks["chol_sigma"] = _block("chol_sigma", analytic, _numeric_gradient(objective, vp.chol_sigma, chol_idx), chol_idx)

    alpha_idx = [(n,) for n in range(vp.alpha.size)]
    g = grad_alpha(state, X, y, competitors=competitors)
    analytic = np.array([g[i] for i in alpha_idx]) + perturb_analytic
    report.blocks["alpha"] = _block("alpha", analytic, _numeric_gradient(objective, vp.alpha, alpha_idx), alpha_idx)
    return report


def run_gradcheck(
    seed: int = 0,
    *,
    n_points: int = 20,
    n_classes: int = 3,
    n_inducing: int = 5,
    dims: int = 2,
    perturb_analytic: float = 0.0,
) -> GradcheckReport:
    state, X, y = random_state(seed, n_points=n_points, n_classes=n_classes, n_inducing=n_inducing, dims=dims)
    return check_gradients(state, X, y, seed=seed, perturb_analytic=perturb_analytic)
