from __future__ import annotations

import math
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

MIN_ALPHA = 1e-8
DEFAULT_JITTER = 1e-6
MODEL_FORMAT_VERSION = 1

TrainMethod = Literal["adam", "coord_ascent"]
AlphaUpdate = Literal["closed_form", "gradient"]
QueryPolicy = Literal["variation_ratio", "mean_entropy"]


class GigParams(BaseModel):
    """Variational factor q(lambda_n) = GIG(1/2, 1, alpha)."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0, allow_inf_nan=False)


class KernelHyperparams(BaseModel):
    """RBF kernel settings. A single lengthscale is shared by every input
    dimension; one entry per dimension switches on ARD."""

    model_config = ConfigDict(frozen=True)

    lengthscale: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    signal_variance: float = Field(1.0, gt=0, allow_inf_nan=False)
    jitter: float = Field(DEFAULT_JITTER, gt=0, allow_inf_nan=False)

    @field_validator("lengthscale")
    @classmethod
    def _positive_lengthscales(cls, value: List[float]) -> List[float]:
        for ls in value:
            if not math.isfinite(ls) or ls <= 0:
                raise ValueError("lengthscale entries must be finite and > 0")
        return [float(ls) for ls in value]

    @property
    def is_ard(self) -> bool:
        return len(self.lengthscale) > 1

    def lengthscales(self, dim: int) -> np.ndarray:
        ls = np.asarray(self.lengthscale, dtype=np.float64)
        if ls.size == 1:
            return np.full(dim, ls[0])
        if ls.size != dim:
            raise ValueError(f"lengthscale has {ls.size} entries but inputs have {dim} dimensions")
        return ls


class TrainConfig(BaseModel):
    method: TrainMethod = "adam"
    epochs: int = Field(1000, ge=0)
    learning_rate: float = Field(5e-4, gt=0)
    rho: float = Field(0.5, gt=0, le=1)
    rho_decay: float = Field(0.0, ge=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    hyperopt_every: int = Field(0, ge=0)
    hyper_learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(0, ge=0)
    alpha_update: AlphaUpdate = "closed_form"
    max_halvings: int = Field(10, ge=0)
    log_every: int = Field(100, ge=1)

    def rho_at(self, iteration: int) -> float:
        return self.rho * (1.0 + iteration) ** (-self.rho_decay)


class ALConfig(BaseModel):
    policy: QueryPolicy = "variation_ratio"
    budget: int = Field(100, ge=0)
    inducing_points: int = Field(4, ge=1)
    retrain_epochs: int = Field(200, ge=0)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    vr_samples: int = Field(128, ge=1)
    learning_rate: float = Field(5e-4, gt=0)
    jitter: float = Field(DEFAULT_JITTER, gt=0)
    threads: int = Field(1, ge=1)

    @field_validator("seeds")
    @classmethod
    def _valid_seeds(cls, value: List[int]) -> List[int]:
        for seed in value:
            if seed < 0 or seed >= 2**64:
                raise ValueError("seeds must be 64-bit unsigned integers")
        return value


class StandardizationStats(BaseModel):
    feature_names: List[str] = Field(default_factory=list)
    means: List[float] = Field(default_factory=list)
    stds: List[float] = Field(default_factory=list)


class ModelDocument(BaseModel):
    """On-disk form of a trained model."""

    format_version: int = MODEL_FORMAT_VERSION
    n_classes: int = Field(ge=2)
    hyper: KernelHyperparams
    inducing: List[List[float]]
    mu: List[List[float]]
    chol_sigma: List[List[List[float]]]
    alpha: List[float]
    standardization: StandardizationStats = Field(default_factory=StandardizationStats)
    label_names: List[str] = Field(default_factory=list)


class RunManifest(BaseModel):
    command: str
    version: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    timings: Dict[str, float] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    exit_code: int = 0
