"""
Dataset ingestion, synthetic generators, splits and standardization.

CSV files carry a header row. Integral label columns are mapped to 1..C in
ascending numeric order; any other label column maps its strings to 1..C in
order of first appearance.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, IngestionError
from .models import StandardizationStats

logger = logging.getLogger("bsvm.data")

DEFAULT_LABEL_COLUMN = "target"
_PARSER_LINE_RE = re.compile(r"line (\d+)")

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class Dataset:
    X: NDArray[np.float64]
    y: NDArray[np.int64]
    feature_names: tuple[str, ...]
    label_names: tuple[str, ...]
    feature_means: Optional[NDArray[np.float64]] = None
    feature_stds: Optional[NDArray[np.float64]] = None

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ConfigurationError("X must be N x M with one label per row")
        if self.X.shape[1] != len(self.feature_names):
            raise ConfigurationError("feature name count does not match X")
        if not np.all(np.isfinite(self.X)):
            raise ConfigurationError("features must be finite")
        if len(self.label_names) < 2:
            raise ConfigurationError("a dataset needs at least two classes")
        if self.y.size and (self.y.min() < 1 or self.y.max() > len(self.label_names)):
            raise ConfigurationError(f"labels must lie in 1..{len(self.label_names)}")

    @property
    def n_points(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    @property
    def class_count(self) -> int:
        return len(self.label_names)

    def class_counts(self) -> NDArray[np.int64]:
        return np.bincount(self.y, minlength=self.class_count + 1)[1:]

    def subset(self, idx: ArrayLike) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], y=self.y[idx])

    def standardization(self) -> StandardizationStats:
        means = self.feature_means if self.feature_means is not None else np.zeros(self.n_features)
        stds = self.feature_stds if self.feature_stds is not None else np.ones(self.n_features)
        return StandardizationStats(
            feature_names=list(self.feature_names),
            means=[float(v) for v in means],
            stds=[float(v) for v in stds],
        )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _read_frame(path: PathLike) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False, encoding="utf-8")
    except FileNotFoundError as exc:
        raise IngestionError(f"no such file: {path}") from exc
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path} is not UTF-8: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise IngestionError(f"{path} is empty", line=1) from exc
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE_RE.search(str(exc))
        raise IngestionError(f"ragged row in {path}", line=int(match.group(1)) if match else None) from exc
    # Missing trailing fields come back as NaN; present-but-empty ones as "".
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.flatnonzero(short)[0])
        raise IngestionError(f"ragged row: expected {frame.shape[1]} fields", line=row + 2)
    return frame


def _label_strings(raw: pd.Series) -> tuple[pd.Series, bool]:
    """Canonical label strings and whether the column is integral."""
    numeric = pd.to_numeric(raw, errors="coerce")
    if len(raw) and numeric.notna().all() and np.all(np.isfinite(numeric)) and np.all(numeric == np.round(numeric)):
        return numeric.astype(np.int64).astype(str), True
    return raw.astype(str).str.strip(), False


def _numeric_features(frame: pd.DataFrame) -> NDArray[np.float64]:
    out = np.empty(frame.shape, dtype=np.float64)
    for k, name in enumerate(frame.columns):
        col = pd.to_numeric(frame[name].str.strip(), errors="coerce")
        bad = col.isna().to_numpy() | ~np.isfinite(col.to_numpy(dtype=np.float64))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise IngestionError(
                f"column {name!r}: value {frame[name].iloc[row]!r} is not a finite number",
                line=row + 2,
            )
        out[:, k] = col.to_numpy(dtype=np.float64)
    return out


def encode_labels(raw: ArrayLike, label_names: Sequence[str]) -> NDArray[np.int64]:
    """Map raw label values onto 1..C using an existing label order."""
    strings, _ = _label_strings(pd.Series(np.asarray(raw, dtype=object)).astype(str))
    lookup = {name: k + 1 for k, name in enumerate(label_names)}
    codes = strings.map(lookup)
    if codes.isna().any():
        row = int(np.flatnonzero(codes.isna().to_numpy())[0])
        raise IngestionError(f"unknown label {strings.iloc[row]!r}", line=row + 2)
    return codes.to_numpy(dtype=np.int64)


def load_csv(path: PathLike, label_column: str = DEFAULT_LABEL_COLUMN) -> Dataset:
    frame = _read_frame(path)
    if label_column not in frame.columns:
        raise IngestionError(f"label column {label_column!r} not in header", line=1)
    strings, integral = _label_strings(frame[label_column])
    if integral:
        label_names = tuple(str(v) for v in sorted({int(s) for s in strings}))
    else:
        label_names = tuple(pd.unique(strings))
    if len(label_names) < 2:
        raise IngestionError(f"label column {label_column!r} holds a single class")
    y = strings.map({name: k + 1 for k, name in enumerate(label_names)}).to_numpy(dtype=np.int64)

    features = frame.drop(columns=[label_column])
    X = _numeric_features(features)
    names = [str(c) for c in features.columns]
    constant = X.std(axis=0) == 0 if X.shape[0] else np.zeros(X.shape[1], dtype=bool)
    for name in np.asarray(names)[constant]:
        logger.warning("dropping constant feature column %r", name)
    keep = ~constant
    if not keep.any():
        raise IngestionError("no informative feature columns")
    return Dataset(
        X=X[:, keep],
        y=y,
        feature_names=tuple(np.asarray(names)[keep].tolist()),
        label_names=label_names,
    )


def load_features(
    path: PathLike,
    feature_names: Sequence[str],
    label_column: Optional[str] = None,
) -> tuple[NDArray[np.float64], Optional[pd.Series]]:
    """Feature matrix in the model's column order plus the raw label column if present."""
    frame = _read_frame(path)
    missing = [name for name in feature_names if name not in frame.columns]
    if missing:
        raise IngestionError(f"missing feature columns: {', '.join(missing)}", line=1)
    X = _numeric_features(frame[list(feature_names)])
    labels = frame[label_column] if label_column and label_column in frame.columns else None
    return X, labels


def save_csv(d: Dataset, path: PathLike, label_column: str = DEFAULT_LABEL_COLUMN) -> None:
    frame = pd.DataFrame(d.X, columns=list(d.feature_names))
    frame[label_column] = np.asarray(d.label_names, dtype=object)[d.y - 1]
    frame.to_csv(path, index=False, float_format="%.17g")


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def blob_centers(classes: int, dims: int, separation: float) -> NDArray[np.float64]:
    """Class centres at mutual distance `separation` where the geometry allows it."""
    centers = np.zeros((classes, dims))
    if dims >= classes - 1:
        # regular simplex: the centred standard basis, rotated into C-1 dims
        basis = np.eye(classes) - 1.0 / classes
        _, _, vt = np.linalg.svd(basis)
        coords = basis @ vt[: classes - 1].T
        centers[:, : classes - 1] = coords * (separation / np.sqrt(2.0))
    elif dims >= 2:
        radius = separation / (2.0 * np.sin(np.pi / classes))
        angles = 2.0 * np.pi * np.arange(classes) / classes
        centers[:, 0] = radius * np.cos(angles)
        centers[:, 1] = radius * np.sin(angles)
    else:
        centers[:, 0] = separation * np.arange(classes)
    return centers


def make_blobs(n: int, classes: int, dims: int, separation: float, seed: int = 0) -> Dataset:
    if n < classes or classes < 2 or dims < 1:
        raise ConfigurationError("make_blobs needs n >= classes >= 2 and dims >= 1")
    if separation < 0:
        raise ConfigurationError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    counts = np.full(classes, n // classes)
    counts[: n % classes] += 1
    y = np.repeat(np.arange(1, classes + 1), counts)
    centers = blob_centers(classes, dims, separation)
    X = centers[y - 1] + rng.standard_normal((n, dims))
    order = rng.permutation(n)
    return Dataset(
        X=X[order],
        y=y[order].astype(np.int64),
        feature_names=tuple(f"x{k + 1}" for k in range(dims)),
        label_names=tuple(str(c) for c in range(1, classes + 1)),
    )


# ---------------------------------------------------------------------------
# Splits and standardization
# ---------------------------------------------------------------------------

def fit_standardization(X: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    return X.mean(axis=0), X.std(axis=0)


def standardize(d: Dataset, means: NDArray[np.float64], stds: NDArray[np.float64], keep: NDArray[np.bool_]) -> Dataset:
    X = (d.X[:, keep] - means[keep]) / stds[keep]
    return replace(
        d,
        X=X,
        feature_names=tuple(np.asarray(d.feature_names)[keep].tolist()),
        feature_means=means[keep],
        feature_stds=stds[keep],
    )


def _stratified_test_counts(counts: NDArray[np.int64], test_fraction: float) -> NDArray[np.int64]:
    floors = np.floor(counts * test_fraction).astype(np.int64)
    remainder = int(round(counts.sum() * test_fraction)) - int(floors.sum())
    for c in range(counts.size):
        if remainder <= 0:
            break
        if floors[c] < counts[c] - 1:
            floors[c] += 1
            remainder -= 1
    return np.clip(floors, 1, counts - 1)


def train_test_split(
    d: Dataset,
    test_fraction: float,
    seed: int = 0,
    stratified: bool = True,
) -> tuple[Dataset, Dataset]:
    """Split, then standardize both parts with statistics of the training part."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    if stratified:
        counts = d.class_counts()
        if np.any(counts < 2):
            c = int(np.flatnonzero(counts < 2)[0])
            raise ConfigurationError(f"class {d.label_names[c]!r} has fewer than 2 members")
        n_test = _stratified_test_counts(counts, test_fraction)
        test_parts, train_parts = [], []
        for c in range(d.class_count):
            members = rng.permutation(np.flatnonzero(d.y == c + 1))
            test_parts.append(members[: n_test[c]])
            train_parts.append(members[n_test[c]:])
        test_idx = np.sort(np.concatenate(test_parts))
        train_idx = np.sort(np.concatenate(train_parts))
    else:
        order = rng.permutation(d.n_points)
        n_test = int(round(d.n_points * test_fraction))
        n_test = min(max(n_test, 1), d.n_points - 1)
        test_idx = np.sort(order[:n_test])
        train_idx = np.sort(order[n_test:])

    train, test = d.subset(train_idx), d.subset(test_idx)
    means, stds = fit_standardization(train.X)
    keep = stds > 0
    for name in np.asarray(d.feature_names)[~keep]:
        logger.warning("dropping feature %r: zero variance on the training split", name)
    if not keep.any():
        raise ConfigurationError("every feature is constant on the training split")
    return standardize(train, means, stds, keep), standardize(test, means, stds, keep)


def apply_standardization(X: ArrayLike, stats: StandardizationStats) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=np.float64)
    if not stats.means:
        return X
    return (X - np.asarray(stats.means)) / np.asarray(stats.stds)
