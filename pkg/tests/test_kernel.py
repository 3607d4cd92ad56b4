"""
Tests for bsvm/kernel.py

Covers:
- RBF evaluation and the ARD lengthscale layout
- KernelCache against a dense brute-force computation
- the Z = X and P = 1 degenerate cases
- jitter escalation and the singular-kernel error
- hyperparameter and inducing-input initialization
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy.linalg import LinAlgError

from bsvm import kernel as kernel_mod
from bsvm.errors import DomainError, SingularKernelError
from bsvm.kernel import (
    InducingInputs,
    build_cache,
    eval_kernel,
    init_hyperparams,
    init_inducing,
    kernel_matrix,
    median_lengthscale,
)
from bsvm.models import KernelHyperparams

from .conftest import dense_kernel


# ---------------------------------------------------------------------------
# eval_kernel / kernel_matrix
# ---------------------------------------------------------------------------

class TestEvalKernel:
    def test_identical_points_give_signal_variance(self):
        h = KernelHyperparams(lengthscale=[0.7], signal_variance=2.5)
        assert eval_kernel([1.0, -2.0], [1.0, -2.0], h) == pytest.approx(2.5)

    def test_unit_distance(self):
        h = KernelHyperparams(lengthscale=[1.0], signal_variance=1.0)
        assert eval_kernel([0.0], [1.0], h) == pytest.approx(0.60653066, abs=1e-8)

    def test_far_points_vanish(self):
        h = KernelHyperparams()
        assert eval_kernel([0.0], [100.0], h) == 0.0

    def test_ard_lengthscales(self):
        h = KernelHyperparams(lengthscale=[1.0, 2.0], signal_variance=1.0)
        expected = math.exp(-0.5 * (1.0 + 0.25))
        assert eval_kernel([0.0, 0.0], [1.0, 1.0], h) == pytest.approx(expected)

    def test_ard_dimension_mismatch(self):
        h = KernelHyperparams(lengthscale=[1.0, 2.0])
        with pytest.raises(ValueError):
            kernel_matrix(np.zeros((2, 3)), np.zeros((2, 3)), h)

    def test_non_finite_input_rejected(self):
        with pytest.raises(DomainError):
            eval_kernel([np.nan], [0.0], KernelHyperparams())

    def test_non_positive_hyperparameters_rejected(self):
        with pytest.raises(ValueError):
            KernelHyperparams(lengthscale=[0.0])
        with pytest.raises(ValueError):
            KernelHyperparams(signal_variance=-1.0)

    def test_matrix_matches_dense(self):
        rng = np.random.default_rng(3)
        A, B = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
        h = KernelHyperparams(lengthscale=[1.3], signal_variance=0.8)
        np.testing.assert_allclose(kernel_matrix(A, B, h), dense_kernel(A, B, 1.3, 0.8), rtol=1e-12)


# ---------------------------------------------------------------------------
# build_cache
# ---------------------------------------------------------------------------

class TestBuildCache:
    def test_dense_oracle(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((10, 2))
        Z = InducingInputs(rng.standard_normal((3, 2)))
        h = KernelHyperparams(lengthscale=[1.1], signal_variance=1.4)
        cache = build_cache(X, Z, h)

        K_PP = dense_kernel(Z.Z, Z.Z, 1.1, 1.4) + cache.jitter * np.eye(3)
        K_NP = dense_kernel(X, Z.Z, 1.1, 1.4)
        K_NN = dense_kernel(X, X, 1.1, 1.4)
        ktilde = np.diag(K_NN - K_NP @ np.linalg.inv(K_PP) @ K_NP.T)
        np.testing.assert_allclose(cache.ktilde_diag, np.maximum(ktilde, 0.0), atol=1e-9)
        np.testing.assert_allclose(cache.kappa, K_NP @ np.linalg.inv(K_PP), atol=1e-9)

    def test_cholesky_reconstructs_jittered_kpp(self):
        rng = np.random.default_rng(1)
        Z = InducingInputs(rng.standard_normal((6, 3)))
        cache = build_cache(rng.standard_normal((8, 3)), Z, KernelHyperparams())
        target = cache.K_PP + cache.jitter * np.eye(6)
        recon = cache.chol_K_PP @ cache.chol_K_PP.T
        assert np.linalg.norm(recon - target) / np.linalg.norm(target) <= 1e-10

    def test_z_equals_x_degenerates(self):
        rng = np.random.default_rng(2)
        X = 2.0 * rng.standard_normal((8, 2))
        h = KernelHyperparams(lengthscale=[1.0], signal_variance=1.7, jitter=1e-10)
        cache = build_cache(X, InducingInputs(X), h)
        assert cache.ktilde_diag.max() <= 1e-8 * h.signal_variance
        np.testing.assert_allclose(cache.kappa, np.eye(8), atol=1e-4)

    def test_single_inducing_point(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((5, 2))
        z = rng.standard_normal((1, 2))
        h = KernelHyperparams(lengthscale=[0.9], signal_variance=1.2)
        cache = build_cache(X, InducingInputs(z), h)
        k_xz = dense_kernel(X, z, 0.9, 1.2)[:, 0]
        expected = 1.2 - k_xz**2 / (1.2 + cache.jitter)
        np.testing.assert_allclose(cache.ktilde_diag, expected, atol=1e-12)

    def test_ktilde_invariant_to_inducing_permutation(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((12, 2))
        Z = rng.standard_normal((4, 2))
        perm = np.array([2, 0, 3, 1])
        h = KernelHyperparams()
        a = build_cache(X, InducingInputs(Z), h)
        b = build_cache(X, InducingInputs(Z[perm]), h)
        np.testing.assert_allclose(a.ktilde_diag, b.ktilde_diag, atol=1e-10)
        np.testing.assert_allclose(a.kappa[:, perm], b.kappa, atol=1e-8)

    def test_empty_data(self):
        Z = InducingInputs(np.zeros((2, 3)) + np.arange(2)[:, None])
        cache = build_cache(np.empty((0, 3)), Z, KernelHyperparams())
        assert cache.n_points == 0
        assert cache.kappa.shape == (0, 2)

    def test_column_mismatch(self):
        with pytest.raises(DomainError):
            build_cache(np.zeros((3, 2)), InducingInputs(np.zeros((1, 3))), KernelHyperparams())

    def test_solve_matches_inverse(self):
        rng = np.random.default_rng(6)
        Z = InducingInputs(rng.standard_normal((5, 2)))
        cache = build_cache(np.empty((0, 2)), Z, KernelHyperparams())
        rhs = rng.standard_normal((5, 2))
        K = cache.K_PP + cache.jitter * np.eye(5)
        np.testing.assert_allclose(cache.solve_K_PP(rhs), np.linalg.solve(K, rhs), rtol=1e-8, atol=1e-10)


class TestJitterEscalation:
    def test_escalates_then_names_duplicates(self, monkeypatch, caplog):
        def always_fails(*args, **kwargs):
            raise LinAlgError("not positive definite")

        monkeypatch.setattr(kernel_mod, "cholesky", always_fails)
        Z = InducingInputs(np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]))
        with caplog.at_level(logging.WARNING, logger="bsvm.kernel"):
            with pytest.raises(SingularKernelError) as err:
                build_cache(np.zeros((2, 2)), Z, KernelHyperparams())
        assert err.value.duplicates == [(0, 2)]
        assert "rows 0 and 2" in str(err.value)
        assert any("retrying" in r.message for r in caplog.records)

    def test_recovers_when_larger_jitter_works(self, monkeypatch):
        real = kernel_mod.cholesky
        calls = {"n": 0}

        def flaky(a, lower=True):
            calls["n"] += 1
            if calls["n"] == 1:
                raise LinAlgError("first attempt fails")
            return real(a, lower=lower)

        monkeypatch.setattr(kernel_mod, "cholesky", flaky)
        cache = build_cache(np.zeros((1, 1)), InducingInputs(np.array([[0.0], [1.0]])), KernelHyperparams(jitter=1e-6))
        assert cache.jitter == pytest.approx(2e-6)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

class TestInitialization:
    def test_median_lengthscale(self):
        X = np.array([[0.0], [1.0], [3.0]])
        # pairwise distances 1, 3, 2
        assert median_lengthscale(X) == pytest.approx(2.0)

    def test_median_lengthscale_degenerate(self):
        assert median_lengthscale(np.zeros((4, 2))) == 1.0
        assert median_lengthscale(np.ones((1, 2))) == 1.0

    def test_init_hyperparams(self):
        X = np.random.default_rng(0).standard_normal((50, 3))
        h = init_hyperparams(X, ard=True, jitter=1e-8)
        assert len(h.lengthscale) == 3
        assert h.signal_variance == 1.0
        assert h.jitter == 1e-8
        assert not init_hyperparams(X).is_ard

    def test_inducing_returns_points_when_few(self):
        X = np.array([[0.0, 1.0], [2.0, 3.0]])
        Z = init_inducing(X, 4, seed=0)
        np.testing.assert_array_equal(Z.Z, X)

    def test_inducing_separates_duplicates(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
        Z = init_inducing(X, 3, seed=0)
        assert Z.duplicate_pairs() == []
        assert np.max(np.abs(Z.Z - X)) < 1e-4

    def test_kmeans_is_seeded(self):
        X = np.random.default_rng(7).standard_normal((200, 2))
        a = init_inducing(X, 8, seed=3)
        b = init_inducing(X, 8, seed=3)
        assert a.count == 8
        np.testing.assert_array_equal(a.Z, b.Z)

    def test_invalid_inducing_inputs(self):
        with pytest.raises(DomainError):
            InducingInputs(np.array([[np.inf, 0.0]]))
        with pytest.raises(DomainError):
            init_inducing(np.zeros((3, 2)), 0)

    def test_empty_cluster_warning_is_silenced(self):
        with warnings.catch_warnings(record=True) as caught:
            kernel_mod.ignore_empty_cluster_warnings()
            warnings.warn(f"{kernel_mod.EMPTY_CLUSTER_MESSAGE}. Re-run kmeans with a different initialization.", UserWarning)
        assert caught == []

    def test_init_inducing_leaves_warning_filters_alone(self):
        before = list(warnings.filters)
        init_inducing(np.random.default_rng(1).standard_normal((60, 2)), 6, seed=0)
        assert warnings.filters == before

    def test_threaded_initialization_matches_sequential(self):
        X = np.random.default_rng(5).standard_normal((120, 2))
        expected = [init_inducing(X, 10, seed=s).Z for s in range(8)]
        with ThreadPoolExecutor(max_workers=4) as pool:
            got = list(pool.map(lambda s: init_inducing(X, 10, seed=s).Z, range(8)))
        for a, b in zip(got, expected):
            np.testing.assert_array_equal(a, b)
