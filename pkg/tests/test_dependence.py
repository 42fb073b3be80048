"""Tests for sample-based dependence measures and rate predictions."""

import numpy as np
import pytest

from zeroshotlab.errors import DomainError, RankDeficient, TooFewSamples, TooFewValues
from zeroshotlab.dependence.measures import (
    empirical_cca,
    msc_estimate,
    rate_predictor,
    singular_decay_fit,
)
from zeroshotlab.kernels.core import KernelSpec


def _views(rng, n: int = 150, dependent: bool = True):
    x = rng.standard_normal((n, 1))
    z = x + 0.1 * rng.standard_normal((n, 1)) if dependent else rng.standard_normal((n, 1))
    return x, z


class TestMscEstimate:
    def test_dependent_exceeds_independent(self, rng):
        k = KernelSpec(1.0)
        dep = msc_estimate(*_views(rng), k, k, lam=1e-3)
        ind = msc_estimate(*_views(rng, dependent=False), k, k, lam=1e-3)
        assert dep > ind >= 0

    def test_symmetric(self, rng):
        x, z = _views(rng, 60)
        k = KernelSpec(1.0)
        assert msc_estimate(x, z, k, k, 1e-2) == pytest.approx(msc_estimate(z, x, k, k, 1e-2))

    def test_shrinks_with_lambda(self, rng):
        x, z = _views(rng, 80)
        k = KernelSpec(1.0)
        assert msc_estimate(x, z, k, k, 1.0) < msc_estimate(x, z, k, k, 1e-3)

    def test_positive_lambda(self, rng):
        x, z = _views(rng, 10)
        with pytest.raises(DomainError):
            msc_estimate(x, z, KernelSpec(1.0), KernelSpec(1.0), 0.0)

    def test_needs_four_pairs(self):
        with pytest.raises(TooFewSamples):
            msc_estimate(np.zeros((3, 1)), np.zeros((3, 1)), KernelSpec(1.0), KernelSpec(1.0), 0.1)


class TestEmpiricalCca:
    def test_correlations_sorted_in_unit_interval(self, rng):
        x, z = _views(rng)
        cca = empirical_cca(x, z, KernelSpec(1.0), KernelSpec(1.0), lam=1e-3, d=4)
        assert cca.correlations.shape == (4,)
        assert np.all((cca.correlations >= 0) & (cca.correlations <= 1))
        assert np.all(np.diff(cca.correlations) <= 1e-12)

    def test_identical_views_are_almost_perfectly_correlated(self, rng):
        x = rng.standard_normal((200, 1))
        cca = empirical_cca(x, x, KernelSpec(1.0), KernelSpec(1.0), lam=1e-3, d=2)
        assert cca.correlations[0] > 0.9

    def test_dependence_raises_leading_correlation(self, rng):
        k = KernelSpec(1.0)
        dep = empirical_cca(*_views(rng), k, k, lam=1e-2, d=2)
        ind = empirical_cca(*_views(rng, dependent=False), k, k, lam=1e-2, d=2)
        assert dep.correlations[0] > ind.correlations[0]

    def test_training_variates_are_standardized(self, rng):
        x, z = _views(rng, 100)
        cca = empirical_cca(x, z, KernelSpec(1.0), KernelSpec(1.0), lam=1e-2, d=2)
        for variates in (cca.transform_x(x), cca.transform_z(z)):
            np.testing.assert_allclose(variates.mean(axis=0), 0.0, atol=1e-8)
            np.testing.assert_allclose(np.mean(variates**2, axis=0), 1.0, rtol=1e-6)

    def test_rank_deficient(self):
        same = np.ones((6, 1))
        with pytest.raises(RankDeficient):
            empirical_cca(same, same, KernelSpec(1.0), KernelSpec(1.0), lam=0.1, d=1)

    def test_bad_d(self, rng):
        x, z = _views(rng, 10)
        with pytest.raises(DomainError):
            empirical_cca(x, z, KernelSpec(1.0), KernelSpec(1.0), lam=0.1, d=0)


class TestSingularDecayFit:
    def test_exact_power_law(self):
        sigmas = np.arange(1, 11, dtype=float) ** -2.0
        fit = singular_decay_fit(sigmas)
        assert fit.gamma == pytest.approx(2.0)
        assert fit.msc == pytest.approx(float(np.sum(sigmas[1:] ** 2)))
        assert fit.n_used == 10

    def test_zero_entries_ignored(self):
        fit = singular_decay_fit([1.0, 0.5, 0.0, 0.25])
        assert fit.n_used == 3

    def test_msc_implied_exponent(self):
        fit = singular_decay_fit([1.0, 1.0, 0.0])
        assert fit.msc_implied_gamma == pytest.approx(1.0)

    def test_too_few_values(self):
        with pytest.raises(TooFewValues):
            singular_decay_fit([1.0, 0.5])


class TestRatePredictor:
    def test_t_zero_uses_gamma_x(self):
        report = rate_predictor(2.0, 1.0, 1.0, t=0.0, omega_rho=1.0, beta=1.0)
        assert report.q == pytest.approx(2.0)
        assert report.conditional_mean_exponent == pytest.approx(2.0 / 3.0)
        assert report.prompt_exponent == pytest.approx(1.0 / 3.0)
        assert report.info_density_exponent == pytest.approx(0.5)
        assert report.misspecified is None

    def test_interpolated_exponent(self):
        report = rate_predictor(1.0, 1.0, 1.0, t=0.5, omega_rho=1.0, beta=1.0)
        assert report.q == pytest.approx(np.sqrt(2.0))

    def test_misspecification_flag(self):
        assert rate_predictor(4.0, 1.0, 1.0, 0.5, 1.0, 1.0, alpha=1.0).misspecified is True
        assert rate_predictor(1.0, 1.0, 1.0, 0.5, 1.0, 1.0, alpha=1.0).misspecified is False

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"t": 1.0},
            {"omega_rho": 0.5},
            {"beta": 0.9},
            {"gamma_x": 0.5},
        ],
    )
    def test_domain(self, kwargs):
        args = {"gamma_x": 1.0, "gamma_z": 1.0, "gamma_xz": 1.0, "t": 0.5, "omega_rho": 1.0, "beta": 1.0}
        args.update(kwargs)
        with pytest.raises(DomainError):
            rate_predictor(**args)
