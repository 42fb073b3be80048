"""Tests for kernels, Gram matrices and spectral filters."""

import numpy as np
import pytest

from zeroshotlab.errors import DegenerateData, DimensionMismatch, DomainError, NotSymmetric, TooFewSamples
from zeroshotlab.kernels.core import (
    KernelSpec,
    ProductKernel,
    SpectralFilter,
    apply_filter,
    center,
    eigh_psd,
    gram,
    kernel_from_points,
    median_heuristic,
)


class TestKernelSpec:
    def test_rbf_value(self):
        k = KernelSpec(bandwidth=2.0)
        value = k.evaluate(np.array([[0.0, 0.0]]), np.array([[2.0, 0.0]]))
        assert value[0, 0] == pytest.approx(np.exp(-0.5))

    @pytest.mark.parametrize("h", [0.0, -1.0, float("nan")])
    def test_bad_bandwidth(self, h):
        with pytest.raises(DomainError):
            KernelSpec(bandwidth=h)

    def test_product_kernel_factorizes(self, rng):
        kx, kz = KernelSpec(1.0), KernelSpec(0.5)
        a, b = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
        prod = ProductKernel(kx, kz, x_dim=2).evaluate(a, b)
        np.testing.assert_allclose(prod, kx.evaluate(a[:, :2], b[:, :2]) * kz.evaluate(a[:, 2:], b[:, 2:]))


class TestGram:
    def test_exactly_symmetric(self, rng):
        bundle = gram(KernelSpec(1.0), rng.standard_normal((30, 2)))
        assert bundle.symmetric
        np.testing.assert_array_equal(bundle.matrix, bundle.matrix.T)
        np.testing.assert_allclose(np.diag(bundle.matrix), 1.0)

    def test_cross_gram_shape(self, rng):
        bundle = gram(KernelSpec(1.0), rng.standard_normal((3, 2)), rng.standard_normal((4, 2)))
        assert bundle.matrix.shape == (3, 4)
        assert not bundle.symmetric

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            gram(KernelSpec(1.0), rng.standard_normal((3, 2)), rng.standard_normal((3, 3)))

    def test_centering_zeroes_row_sums(self, rng):
        bundle = center(gram(KernelSpec(1.0), rng.standard_normal((20, 2))))
        assert bundle.centered
        np.testing.assert_allclose(bundle.matrix.sum(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(bundle.matrix.sum(axis=1), 0.0, atol=1e-12)


class TestEighPsd:
    def test_descending_and_nonnegative(self, rng):
        eig = eigh_psd(gram(KernelSpec(1.0), rng.standard_normal((25, 2))))
        assert np.all(np.diff(eig.values) <= 0)
        assert np.all(eig.values >= 0)

    def test_reconstructs(self, rng):
        k = gram(KernelSpec(1.0), rng.standard_normal((10, 2))).matrix
        eig = eigh_psd(k)
        np.testing.assert_allclose((eig.vectors * eig.values) @ eig.vectors.T, k, atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(NotSymmetric):
            eigh_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestSpectralFilter:
    def test_tikhonov(self):
        f = SpectralFilter("tikhonov", 0.5)
        np.testing.assert_allclose(f(np.array([0.0, 0.5, 1.5])), [2.0, 1.0, 0.5])

    def test_cutoff(self):
        f = SpectralFilter("cutoff", 0.5)
        np.testing.assert_allclose(f(np.array([0.1, 0.5, 2.0])), [0.0, 2.0, 0.5])

    def test_ratio_vanishes_at_zero(self):
        f = SpectralFilter("tikhonov", 1.0)
        np.testing.assert_allclose(f.ratio(np.array([0.0, 1.0])), [0.0, 0.5])

    def test_positive_lambda(self):
        with pytest.raises(DomainError):
            SpectralFilter("cutoff", 0.0)

    def test_apply_filter_is_regularized_inverse(self, rng):
        k = gram(KernelSpec(1.0), rng.standard_normal((8, 2))).matrix
        lam = 0.1
        inv = apply_filter(eigh_psd(k), SpectralFilter("tikhonov", lam))
        np.testing.assert_allclose(inv @ (k + lam * np.eye(8)), np.eye(8), atol=1e-8)


class TestMedianHeuristic:
    def test_lower_median(self):
        # Pairwise distances 1, 2, 3: lower median is 2
        assert median_heuristic([0.0, 1.0, 3.0]) == pytest.approx(2.0)

    def test_zero_median_uses_positive_distances(self):
        assert median_heuristic([0.0, 0.0, 0.0, 2.0]) == pytest.approx(2.0)

    def test_identical_points(self):
        assert median_heuristic([[1.0, 1.0]] * 3) == 1.0
        with pytest.raises(DegenerateData):
            median_heuristic([[1.0, 1.0]] * 3, strict=True)

    def test_needs_two_points(self):
        with pytest.raises(TooFewSamples):
            median_heuristic([[0.0]])

    def test_kernel_from_points_scales(self):
        assert kernel_from_points([0.0, 1.0, 3.0], scale=0.5).bandwidth == pytest.approx(1.0)
