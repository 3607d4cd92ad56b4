from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .errors import IngestionError
from .kernel import InducingInputs
from .model_core import ModelState, VariationalParams
from .models import MODEL_FORMAT_VERSION, ModelDocument, RunManifest

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def state_to_document(state: ModelState) -> ModelDocument:
    return ModelDocument(
        n_classes=state.n_classes,
        hyper=state.hyper,
        inducing=state.Z.Z.tolist(),
        mu=state.vp.mu.tolist(),
        chol_sigma=state.vp.chol_sigma.tolist(),
        alpha=state.vp.alpha.tolist(),
        standardization=state.standardization,
        label_names=list(state.label_names),
    )


def state_from_document(doc: ModelDocument) -> ModelState:
    if doc.format_version != MODEL_FORMAT_VERSION:
        raise IngestionError(f"unsupported model format version {doc.format_version}")
    try:
        Z = InducingInputs(np.asarray(doc.inducing, dtype=np.float64))
        vp = VariationalParams(
            mu=np.asarray(doc.mu, dtype=np.float64).reshape(doc.n_classes, Z.count),
            chol_sigma=np.asarray(doc.chol_sigma, dtype=np.float64).reshape(doc.n_classes, Z.count, Z.count),
            alpha=np.asarray(doc.alpha, dtype=np.float64),
        )
    except ValueError as exc:
        raise IngestionError(f"model arrays have inconsistent shapes: {exc}") from exc
    return ModelState(
        hyper=doc.hyper,
        Z=Z,
        vp=vp,
        n_classes=doc.n_classes,
        standardization=doc.standardization,
        label_names=list(doc.label_names),
    )


def save_model(state: ModelState, path: PathLike) -> None:
    Path(path).write_text(state_to_document(state).model_dump_json(indent=2) + "\n", encoding="utf-8")


def load_model(path: PathLike) -> ModelState:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise IngestionError(f"no such model file: {path}") from exc
    try:
        doc = ModelDocument.model_validate_json(raw)
    except ValidationError as exc:
        raise IngestionError(f"{path} is not a valid model document: {exc.error_count()} error(s)") from exc
    return state_from_document(doc)


def write_frame(frame: pd.DataFrame, path: PathLike) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def write_manifest(manifest: RunManifest, path: PathLike) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
