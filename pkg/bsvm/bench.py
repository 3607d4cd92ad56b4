"""
Accuracy tables and average-rank comparison across datasets.

Tables are read from long-form CSV (`dataset,method,accuracy`). Within a
dataset methods are ranked by descending accuracy; tied methods share the
mean of the rank positions they span.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from .errors import ConfigurationError, IngestionError

LONG_COLUMNS = ("dataset", "method", "accuracy")


@dataclass(frozen=True, eq=False)
class AccuracyTable:
    """methods x datasets accuracy matrix."""

    frame: pd.DataFrame

    def __post_init__(self) -> None:
        if self.frame.empty:
            raise ConfigurationError("accuracy table is empty")
        if self.frame.isna().any().any():
            missing = self.frame.isna().stack()
            method, dataset = missing[missing].index[0]
            raise ConfigurationError(f"accuracy table has no entry for method {method!r} on dataset {dataset!r}")
        values = self.frame.to_numpy(dtype=np.float64)
        if np.any(values < 0) or np.any(values > 1):
            raise ConfigurationError("accuracies must lie in [0, 1]")

    @classmethod
    def from_records(cls, records) -> "AccuracyTable":
        long = pd.DataFrame.from_records(records, columns=list(LONG_COLUMNS))
        return cls(_pivot(long))

    @property
    def methods(self) -> list[str]:
        return [str(m) for m in self.frame.index]

    @property
    def datasets(self) -> list[str]:
        return [str(d) for d in self.frame.columns]


def _pivot(long: pd.DataFrame) -> pd.DataFrame:
    dupes = long.duplicated(subset=["dataset", "method"])
    if dupes.any():
        row = long[dupes].iloc[0]
        raise ConfigurationError(f"duplicate accuracy for method {row['method']!r} on dataset {row['dataset']!r}")
    wide = long.pivot(index="method", columns="dataset", values="accuracy")
    return wide.astype(np.float64)


def load_accuracy_table(path: Union[str, Path]) -> AccuracyTable:
    try:
        long = pd.read_csv(path, dtype={"dataset": str, "method": str})
    except FileNotFoundError as exc:
        raise IngestionError(f"no such file: {path}") from exc
    except pd.errors.ParserError as exc:
        raise IngestionError(f"cannot parse {path}: {exc}") from exc
    missing = [c for c in LONG_COLUMNS if c not in long.columns]
    if missing:
        raise IngestionError(f"accuracy table lacks columns: {', '.join(missing)}", line=1)
    accuracy = pd.to_numeric(long["accuracy"], errors="coerce")
    if accuracy.isna().any():
        row = int(np.flatnonzero(accuracy.isna().to_numpy())[0])
        raise IngestionError(f"accuracy {long['accuracy'].iloc[row]!r} is not a number", line=row + 2)
    long = long.assign(accuracy=accuracy)[list(LONG_COLUMNS)]
    return AccuracyTable(_pivot(long))


def dataset_ranks(t: AccuracyTable) -> pd.DataFrame:
    """methods x datasets matrix of ranks (1 = best)."""
    return t.frame.rank(axis=0, ascending=False, method="average")


def mean_ranks(t: AccuracyTable) -> pd.Series:
    return dataset_ranks(t).mean(axis=1).rename("mean_rank")


def rank_report(t: AccuracyTable) -> pd.DataFrame:
    ranks = dataset_ranks(t)
    report = pd.DataFrame({"method": ranks.index, "mean_rank": ranks.mean(axis=1).to_numpy()})
    for dataset in ranks.columns:
        report[f"rank_{dataset}"] = ranks[dataset].to_numpy()
    return report.sort_values(["mean_rank", "method"], kind="mergesort").reset_index(drop=True)


def format_rank_table(report: pd.DataFrame) -> str:
    width = max(len("method"), *(len(m) for m in report["method"]))
    lines = [f"{'method':<{width}}  mean_rank"]
    for method, rank in zip(report["method"], report["mean_rank"]):
        lines.append(f"{method:<{width}}  {rank:9.4g}")
    return "\n".join(lines)
