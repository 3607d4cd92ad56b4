"""
Tests for bsvm/data.py

Covers:
- CSV ingestion: label encoding, ragged rows, bad values, constant columns
- feature loading in model column order
- the synthetic blob generator
- stratified splitting and standardization
"""
from __future__ import annotations

import logging

import numpy as np
import pytest

from bsvm.data import (
    Dataset,
    apply_standardization,
    blob_centers,
    encode_labels,
    load_csv,
    load_features,
    make_blobs,
    save_csv,
    train_test_split,
)
from bsvm.errors import ConfigurationError, IngestionError
from bsvm.models import StandardizationStats

from .conftest import write_csv


# ---------------------------------------------------------------------------
# load_csv
# ---------------------------------------------------------------------------

class TestLoadCsv:
    def test_integer_labels_in_ascending_order(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "a,b,target\n0.5,1,30\n1.5,2,10\n2.5,0,30\n3.5,1,20\n")
        d = load_csv(path)
        assert d.label_names == ("10", "20", "30")
        assert d.y.tolist() == [3, 1, 3, 2]
        assert d.feature_names == ("a", "b")
        np.testing.assert_array_equal(d.X[:, 0], [0.5, 1.5, 2.5, 3.5])

    def test_string_labels_in_first_appearance_order(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x,species\n1,dog\n2,cat\n3,dog\n4,eel\n")
        d = load_csv(path, label_column="species")
        assert d.label_names == ("dog", "cat", "eel")
        assert d.y.tolist() == [1, 2, 1, 3]

    def test_short_row_reports_line(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "a,b,target\n1,2,1\n3,2\n4,5,2\n")
        with pytest.raises(IngestionError) as err:
            load_csv(path)
        assert err.value.line == 3

    def test_long_row_reports_line(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "a,b,target\n1,2,1\n3,4,2\n3,4,5,2\n")
        with pytest.raises(IngestionError) as err:
            load_csv(path)
        assert err.value.line == 4

    def test_non_numeric_feature_reports_line(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "a,target\n1,1\n2,2\nabc,1\n")
        with pytest.raises(IngestionError) as err:
            load_csv(path)
        assert err.value.line == 4
        assert "abc" in str(err.value)

    def test_single_class(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "a,target\n1,7\n2,7\n")
        with pytest.raises(IngestionError):
            load_csv(path)

    def test_missing_label_column(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "a,b\n1,2\n")
        with pytest.raises(IngestionError) as err:
            load_csv(path)
        assert err.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError):
            load_csv(tmp_path / "nope.csv")

    def test_constant_column_dropped(self, tmp_path, caplog):
        path = write_csv(tmp_path / "d.csv", "a,flat,target\n1,5,1\n2,5,2\n3,5,1\n")
        with caplog.at_level(logging.WARNING, logger="bsvm.data"):
            d = load_csv(path)
        assert d.feature_names == ("a",)
        assert any("flat" in r.message for r in caplog.records)

    def test_saved_file_reloads_exactly(self, tmp_path, blobs):
        path = tmp_path / "blobs.csv"
        save_csv(blobs, path)
        again = load_csv(path)
        np.testing.assert_array_equal(again.X, blobs.X)
        np.testing.assert_array_equal(again.y, blobs.y)
        assert again.label_names == blobs.label_names


class TestLoadFeatures:
    def test_model_column_order(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", "b,a,target\n1,2,x\n3,4,y\n")
        X, labels = load_features(path, ["a", "b"], label_column="target")
        np.testing.assert_array_equal(X, [[2.0, 1.0], [4.0, 3.0]])
        assert labels.tolist() == ["x", "y"]

    def test_labels_optional(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", "a\n1\n")
        _, labels = load_features(path, ["a"], label_column="target")
        assert labels is None

    def test_missing_feature(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", "a\n1\n")
        with pytest.raises(IngestionError):
            load_features(path, ["a", "b"])

    def test_encode_labels(self):
        assert encode_labels(["cat", "dog", "cat"], ("dog", "cat")).tolist() == [2, 1, 2]
        assert encode_labels([20, 10], ("10", "20")).tolist() == [2, 1]
        with pytest.raises(IngestionError):
            encode_labels(["eel"], ("dog", "cat"))


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

class TestBlobs:
    def test_balanced_and_labelled(self):
        d = make_blobs(100, 3, 2, 3.0, seed=0)
        assert d.class_counts().tolist() == [34, 33, 33]
        assert d.label_names == ("1", "2", "3")
        assert d.feature_names == ("x1", "x2")

    def test_seeded(self):
        a = make_blobs(50, 4, 3, 2.0, seed=9)
        b = make_blobs(50, 4, 3, 2.0, seed=9)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)

    @pytest.mark.parametrize("classes,dims", [(3, 2), (4, 3), (5, 2), (3, 1)])
    def test_centres_respect_separation(self, classes, dims):
        centers = blob_centers(classes, dims, 6.0)
        assert centers.shape == (classes, dims)
        gaps = [np.linalg.norm(centers[i] - centers[j]) for i in range(classes) for j in range(i + 1, classes)]
        assert min(gaps) == pytest.approx(6.0)

    def test_invalid_arguments(self):
        with pytest.raises(ConfigurationError):
            make_blobs(2, 3, 2, 1.0)
        with pytest.raises(ConfigurationError):
            make_blobs(10, 2, 2, -1.0)


# ---------------------------------------------------------------------------
# Splits and standardization
# ---------------------------------------------------------------------------

class TestSplit:
    def test_stratified_counts(self, blobs):
        train, test = train_test_split(blobs, 0.2, seed=0)
        assert train.n_points + test.n_points == 90
        assert test.class_counts().tolist() == [6, 6, 6]

    def test_standardized_with_training_statistics(self, blobs):
        train, test = train_test_split(blobs, 0.3, seed=1)
        np.testing.assert_allclose(train.X.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train.X.std(axis=0), 1.0, rtol=1e-12)
        stats = train.standardization()
        raw_test = (test.X * np.asarray(stats.stds)) + np.asarray(stats.means)
        np.testing.assert_allclose(apply_standardization(raw_test, stats), test.X, atol=1e-12)

    def test_reproducible(self, blobs):
        a, _ = train_test_split(blobs, 0.25, seed=3)
        b, _ = train_test_split(blobs, 0.25, seed=3)
        np.testing.assert_array_equal(a.X, b.X)

    def test_unstratified(self, blobs):
        train, test = train_test_split(blobs, 0.1, seed=0, stratified=False)
        assert test.n_points == 9
        assert train.n_points == 81

    def test_constant_feature_dropped(self, caplog):
        rng = np.random.default_rng(0)
        X = np.column_stack([rng.standard_normal(12), np.full(12, 2.0)])
        d = Dataset(X=X, y=np.tile([1, 2], 6), feature_names=("a", "flat"), label_names=("1", "2"))
        with caplog.at_level(logging.WARNING, logger="bsvm.data"):
            train, test = train_test_split(d, 0.25, seed=0)
        assert train.feature_names == ("a",)
        assert test.X.shape[1] == 1

    def test_tiny_class_rejected(self):
        d = Dataset(X=np.arange(5.0)[:, None], y=np.array([1, 1, 1, 1, 2]), feature_names=("a",), label_names=("1", "2"))
        with pytest.raises(ConfigurationError):
            train_test_split(d, 0.4)

    def test_fraction_bounds(self, blobs):
        with pytest.raises(ConfigurationError):
            train_test_split(blobs, 1.0)

    def test_no_statistics_means_identity(self):
        X = np.array([[1.0, 2.0]])
        np.testing.assert_array_equal(apply_standardization(X, StandardizationStats()), X)


class TestDatasetValidation:
    def test_label_out_of_range(self):
        with pytest.raises(ConfigurationError):
            Dataset(X=np.zeros((2, 1)), y=np.array([1, 3]), feature_names=("a",), label_names=("1", "2"))

    def test_non_finite_features(self):
        with pytest.raises(ConfigurationError):
            Dataset(X=np.array([[np.nan], [1.0]]), y=np.array([1, 2]), feature_names=("a",), label_names=("1", "2"))
