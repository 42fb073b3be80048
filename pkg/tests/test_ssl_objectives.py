"""Tests for self-supervised objectives and their covariance rewrites."""

import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from zeroshotlab.errors import DimensionMismatch, DomainError, TooFewSamples, WhiteningFailure
from zeroshotlab.ssl.objectives import (
    EmbeddingBatch,
    VicregParams,
    barlow_twins_loss,
    clip_loss,
    clip_quadratic_form,
    clip_taylor_gap,
    cov_stats,
    spectral_contrastive_loss,
    spectral_contrastive_loss_loop,
    spectral_contrastive_rewrite,
    vicreg_identity_gap,
    vicreg_loss,
)


def _batch(rng, n: int = 16, d: int = 3) -> EmbeddingBatch:
    return EmbeddingBatch.of(rng.standard_normal((n, d)), rng.standard_normal((n, d)))


class TestEmbeddingBatch:
    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            EmbeddingBatch.of(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_needs_matrix(self):
        with pytest.raises(DimensionMismatch):
            EmbeddingBatch.of(np.zeros(3), np.zeros(3))

    def test_cov_stats_needs_two_rows(self):
        with pytest.raises(TooFewSamples):
            cov_stats(EmbeddingBatch.of(np.zeros((1, 2)), np.zeros((1, 2))))

    def test_cov_stats_normalization(self, rng):
        batch = _batch(rng, 10, 2)
        ca = batch.a - batch.a.mean(axis=0)
        cb = batch.b - batch.b.mean(axis=0)
        np.testing.assert_allclose(cov_stats(batch).sigma_ab, ca.T @ cb / 10)


class TestClipLoss:
    def test_zero_embeddings(self):
        batch = EmbeddingBatch.of(np.zeros((5, 2)), np.zeros((5, 2)))
        assert clip_loss(batch) == pytest.approx(math.log(5))
        assert clip_loss(batch, log_n=True) == pytest.approx(2 * math.log(5))
        assert clip_loss(batch, offset=1.5) == pytest.approx(math.log(5) + 1.5)

    def test_single_pair_is_zero(self, rng):
        assert clip_loss(_batch(rng, n=1)) == pytest.approx(0.0, abs=1e-12)

    def test_rotation_invariant(self, rng):
        batch = _batch(rng)
        q = ortho_group.rvs(3, random_state=0)
        rotated = EmbeddingBatch.of(batch.a @ q, batch.b @ q)
        assert clip_loss(rotated) == pytest.approx(clip_loss(batch), rel=1e-10)

    def test_stacked_batches(self, rng):
        a, b = rng.standard_normal((4, 8, 2)), rng.standard_normal((4, 8, 2))
        stacked = clip_loss(EmbeddingBatch.of(a, b))
        assert stacked.shape == (4,)
        assert stacked[2] == pytest.approx(clip_loss(EmbeddingBatch.of(a[2], b[2])))

    def test_aligned_pairs_beat_shuffled(self, rng):
        a = 2.0 * rng.standard_normal((20, 3))
        aligned = clip_loss(EmbeddingBatch.of(a, a))
        shuffled = clip_loss(EmbeddingBatch.of(a, np.roll(a, 1, axis=0)))
        assert aligned < shuffled


class TestClipTaylor:
    def test_gap_decays_faster_than_quadratic(self, rng):
        batch = _batch(rng)
        coarse = clip_taylor_gap(batch, eps=0.1)
        fine = clip_taylor_gap(batch, eps=0.05)
        assert fine < coarse / 4

    def test_constant_left_without_subtraction(self):
        batch = EmbeddingBatch.of(np.zeros((4, 2)), np.zeros((4, 2)))
        assert clip_taylor_gap(batch, include_constant=False) == pytest.approx(math.log(4))
        assert clip_taylor_gap(batch) == pytest.approx(0.0, abs=1e-12)

    def test_quadratic_form_at_zero(self):
        assert clip_quadratic_form(EmbeddingBatch.of(np.zeros((3, 2)), np.zeros((3, 2)))) == 0.0


class TestSpectralContrastive:
    def test_matches_loop(self, rng):
        batch = _batch(rng, 9, 4)
        assert spectral_contrastive_loss(batch) == pytest.approx(
            spectral_contrastive_loss_loop(batch.a, batch.b), rel=1e-12
        )

    def test_needs_two_rows(self):
        with pytest.raises(TooFewSamples):
            spectral_contrastive_loss(EmbeddingBatch.of(np.ones((1, 2)), np.ones((1, 2))))

    def test_rewrite_diagnostic(self, rng):
        diag = spectral_contrastive_rewrite(_batch(rng, 12, 2))
        assert diag.pair_sum > 0
        assert diag.covariance_term >= 0
        assert diag.discrepancy == pytest.approx(abs(diag.pair_sum - diag.covariance_term))

    def test_rewrite_single_batch_only(self, rng):
        stacked = EmbeddingBatch.of(rng.standard_normal((2, 5, 2)), rng.standard_normal((2, 5, 2)))
        with pytest.raises(DimensionMismatch):
            spectral_contrastive_rewrite(stacked)


class TestVicreg:
    def test_parts_sum_to_total(self, rng):
        result = vicreg_loss(_batch(rng))
        expected = result.variance + 25.0 * result.invariance + result.covariance
        assert result.total == pytest.approx(expected)

    def test_identical_views_have_no_invariance_cost(self, rng):
        a = rng.standard_normal((10, 2))
        assert vicreg_loss(EmbeddingBatch.of(a, a)).invariance == 0.0

    def test_hinge_inactive_at_large_variance(self, rng):
        batch = EmbeddingBatch.of(5.0 * rng.standard_normal((200, 2)), 5.0 * rng.standard_normal((200, 2)))
        assert vicreg_loss(batch).variance == 0.0

    def test_identity_holds(self, rng):
        for _ in range(10):
            assert vicreg_identity_gap(_batch(rng, 7, 3)) < 1e-12

    def test_positive_parameters(self):
        with pytest.raises(DomainError):
            VicregParams(c1=0.0)


class TestBarlowTwins:
    def test_invariant_to_linear_maps(self, rng):
        batch = _batch(rng, 40, 3)
        m = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
        mapped = EmbeddingBatch.of(batch.a @ m, batch.b)
        assert barlow_twins_loss(mapped) == pytest.approx(barlow_twins_loss(batch), rel=1e-8)

    def test_perfectly_correlated_views(self, rng):
        a = rng.standard_normal((30, 2))
        assert barlow_twins_loss(EmbeddingBatch.of(a, 2.0 * a + 1.0)) == pytest.approx(0.0, abs=1e-10)

    def test_singular_covariance(self, rng):
        with pytest.raises(WhiteningFailure):
            barlow_twins_loss(_batch(rng, n=2, d=3))

    def test_negative_kappa(self, rng):
        with pytest.raises(DomainError):
            barlow_twins_loss(_batch(rng), kappa=-1.0)
