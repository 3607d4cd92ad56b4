"""
Tests for bsvm/bench.py

Covers:
- per-dataset ranks with shared ranks for ties
- mean ranks and the sorted report
- table validation and CSV loading
"""
from __future__ import annotations

import numpy as np
import pytest

from bsvm.bench import (
    AccuracyTable,
    dataset_ranks,
    format_rank_table,
    load_accuracy_table,
    mean_ranks,
    rank_report,
)
from bsvm.errors import ConfigurationError, IngestionError

from .conftest import write_csv

RECORDS = [
    ("d1", "A", 0.9),
    ("d1", "B", 0.8),
    ("d1", "C", 0.8),
    ("d2", "A", 0.7),
    ("d2", "B", 0.9),
    ("d2", "C", 0.6),
]


@pytest.fixture
def table() -> AccuracyTable:
    return AccuracyTable.from_records(RECORDS)


class TestRanks:
    def test_ties_share_average_rank(self, table):
        ranks = dataset_ranks(table)
        assert ranks.loc["A", "d1"] == 1.0
        assert ranks.loc["B", "d1"] == 2.5
        assert ranks.loc["C", "d1"] == 2.5
        assert ranks["d2"].to_dict() == {"A": 2.0, "B": 1.0, "C": 3.0}

    def test_mean_ranks(self, table):
        assert mean_ranks(table).to_dict() == {"A": 1.5, "B": 1.75, "C": 2.75}

    def test_report_sorted_by_mean_rank(self, table):
        report = rank_report(table)
        assert report["method"].tolist() == ["A", "B", "C"]
        assert list(report.columns) == ["method", "mean_rank", "rank_d1", "rank_d2"]

    def test_single_method(self):
        t = AccuracyTable.from_records([("d1", "only", 0.5), ("d2", "only", 0.4)])
        assert mean_ranks(t).tolist() == [1.0]

    def test_formatted_table(self, table):
        text = format_rank_table(rank_report(table))
        lines = text.splitlines()
        assert lines[0].split() == ["method", "mean_rank"]
        assert lines[1].split() == ["A", "1.5"]
        assert len(lines) == 4


class TestValidation:
    def test_missing_entry(self):
        with pytest.raises(ConfigurationError):
            AccuracyTable.from_records(RECORDS[:-1])

    def test_out_of_range(self):
        with pytest.raises(ConfigurationError):
            AccuracyTable.from_records([("d1", "A", 1.2), ("d1", "B", 0.5)])

    def test_duplicate_entry(self):
        with pytest.raises(ConfigurationError):
            AccuracyTable.from_records(RECORDS + [("d1", "A", 0.5)])

    def test_load_csv(self, tmp_path):
        text = "dataset,method,accuracy\n" + "".join(f"{d},{m},{a}\n" for d, m, a in RECORDS)
        t = load_accuracy_table(write_csv(tmp_path / "acc.csv", text))
        assert t.methods == ["A", "B", "C"]
        assert t.datasets == ["d1", "d2"]

    def test_load_reports_bad_value(self, tmp_path):
        path = write_csv(tmp_path / "acc.csv", "dataset,method,accuracy\nd1,A,0.5\nd1,B,high\n")
        with pytest.raises(IngestionError) as err:
            load_accuracy_table(path)
        assert err.value.line == 3

    def test_load_requires_columns(self, tmp_path):
        path = write_csv(tmp_path / "acc.csv", "dataset,score\nd1,0.5\n")
        with pytest.raises(IngestionError):
            load_accuracy_table(path)


class TestRankProperties:
    def test_tied_pair_shares_ranks(self):
        t = AccuracyTable.from_records([("d", "A", 1.0), ("d", "B", 1.0), ("d", "C", 0.8)])
        assert dataset_ranks(t)["d"].tolist() == [1.5, 1.5, 3.0]

    def test_rank_sums_per_dataset(self):
        rng = np.random.default_rng(0)
        methods = ["m1", "m2", "m3", "m4", "m5"]
        records = [
            (f"d{k}", m, float(round(rng.random(), 1)))
            for k in range(8)
            for m in methods
        ]
        ranks = dataset_ranks(AccuracyTable.from_records(records))
        assert (ranks.sum(axis=0) == 5 * 6 / 2).all()
