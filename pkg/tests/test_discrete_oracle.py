"""Tests for exact discrete-alphabet quantities."""

import numpy as np
import pytest

from zeroshotlab.errors import (
    BadRank,
    DimensionMismatch,
    DomainError,
    NotAbsolutelyContinuous,
    ZeroConditioner,
    ZeroMarginal,
)
from zeroshotlab.oracle.discrete import (
    DiscreteJoint,
    DiscreteTriple,
    PromptTable,
    ci_triple,
    conditional_independence_gap,
    conditional_mean_svd,
    distribution_shift_check,
    information_density,
    lancaster_truncate,
    likelihood_ratio_bound,
    msc,
    predictors_and_bound,
    random_joint,
    random_prompt,
    random_triple,
    residual_dependence,
)


def _ci_triple() -> DiscreteTriple:
    return ci_triple(
        [0.5, 0.5],
        [[0.8, 0.3], [0.2, 0.7]],
        [[0.9, 0.1], [0.1, 0.9]],
    )


class TestTables:
    def test_rejects_unnormalized(self):
        with pytest.raises(DomainError):
            DiscreteJoint(np.full((2, 2), 0.3))

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            DiscreteJoint(np.array([[0.6, -0.1], [0.25, 0.25]]))

    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionMismatch):
            DiscreteTriple(np.full((2, 2), 0.25))

    def test_probs_are_read_only(self):
        joint = DiscreteJoint(np.full((2, 2), 0.25))
        with pytest.raises(ValueError):
            joint.probs[0, 0] = 1.0

    def test_triple_marginals(self, small_triple):
        assert small_triple.p_x.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(small_triple.xz_joint().q_z, small_triple.p_z)
        np.testing.assert_allclose(small_triple.yz_table().rho_y, small_triple.p_y)


class TestInformationDensity:
    def test_unit_mean_under_product(self, rng):
        joint = random_joint(rng, 4, 3)
        r = information_density(joint)
        assert float(joint.q_x @ r @ joint.q_z) == pytest.approx(1.0)

    def test_product_law_is_constant_one(self):
        joint = DiscreteJoint(np.outer([0.2, 0.8], [0.5, 0.3, 0.2]))
        np.testing.assert_allclose(information_density(joint), 1.0)

    def test_zero_marginal_raises(self):
        joint = DiscreteJoint(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(ZeroMarginal):
            information_density(joint)


class TestConditionalMeanSvd:
    def test_leading_pair_is_constant(self, rng):
        spectrum = conditional_mean_svd(random_joint(rng, 4, 5))
        assert spectrum.singular_values[0] == pytest.approx(1.0)
        np.testing.assert_allclose(spectrum.left_functions[:, 0], 1.0, atol=1e-10)
        np.testing.assert_allclose(spectrum.right_functions[:, 0], 1.0, atol=1e-10)

    def test_singular_values_bounded_by_one(self, rng):
        spectrum = conditional_mean_svd(random_joint(rng, 5, 5))
        assert np.all(spectrum.singular_values <= 1.0 + 1e-12)
        assert np.all(np.diff(spectrum.singular_values) <= 1e-12)

    def test_full_reconstruction_recovers_density(self, rng):
        joint = random_joint(rng, 3, 4)
        spectrum = conditional_mean_svd(joint)
        np.testing.assert_allclose(spectrum.reconstruct(), information_density(joint), atol=1e-10)

    def test_functions_orthonormal(self, rng):
        joint = random_joint(rng, 4, 4)
        spectrum = conditional_mean_svd(joint)
        gram = spectrum.left_functions.T @ (joint.q_x[:, None] * spectrum.left_functions)
        np.testing.assert_allclose(gram, np.eye(spectrum.rank), atol=1e-10)


class TestMsc:
    def test_matches_spectral_tail(self, rng):
        joint = random_joint(rng, 3, 6)
        spectrum = conditional_mean_svd(joint)
        assert msc(joint) == pytest.approx(float(np.sum(spectrum.singular_values[1:] ** 2)))

    def test_independent_law_has_zero_msc(self):
        joint = DiscreteJoint(np.outer([0.3, 0.7], [0.1, 0.9]))
        assert msc(joint) == pytest.approx(0.0, abs=1e-12)

    def test_diagonal_law(self):
        # Perfectly dependent 2 x 2: R = 2 on the diagonal, chi^2 = 1
        joint = DiscreteJoint(np.diag([0.5, 0.5]))
        assert msc(joint) == pytest.approx(1.0)


class TestLancasterTruncate:
    def test_full_rank_has_no_tail(self, rng):
        joint = random_joint(rng, 3, 3)
        approx, tail = lancaster_truncate(joint, 3)
        assert tail == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(approx, information_density(joint), atol=1e-10)

    def test_rank_one_is_independence(self, rng):
        joint = random_joint(rng, 3, 4)
        approx, tail = lancaster_truncate(joint, 1)
        np.testing.assert_allclose(approx, 1.0, atol=1e-10)
        assert tail == pytest.approx(msc(joint))

    @pytest.mark.parametrize("d", [0, 4])
    def test_bad_rank(self, rng, d):
        with pytest.raises(BadRank):
            lancaster_truncate(random_joint(rng, 3, 3), d)


class TestResidualDependence:
    def test_zero_under_conditional_independence(self):
        assert residual_dependence(_ci_triple()) == pytest.approx(0.0, abs=1e-14)
        assert conditional_independence_gap(_ci_triple()) == pytest.approx(0.0, abs=1e-14)

    def test_positive_for_generic_triple(self, small_triple):
        assert residual_dependence(small_triple) > 0

    def test_zero_mass_caption_is_skipped(self):
        probs = np.zeros((2, 2, 3))
        probs[:, :, :2] = _ci_triple().probs
        assert residual_dependence(DiscreteTriple(probs)) == pytest.approx(0.0, abs=1e-14)


class TestPredictorsAndBound:
    def test_unbiased_prompt_has_zero_bias(self, small_triple):
        report = predictors_and_bound(small_triple, small_triple.yz_table(), [0.0, 1.0])
        assert report.prompt_bias == pytest.approx(0.0, abs=1e-14)
        assert report.bound_ok

    def test_ci_and_unbiased_recovers_direct_predictor(self):
        triple = _ci_triple()
        report = predictors_and_bound(triple, triple.yz_table(), [0.0, 1.0])
        np.testing.assert_allclose(report.eta_rho, report.eta_star, atol=1e-12)
        assert report.lhs == pytest.approx(0.0, abs=1e-14)

    def test_bound_holds_for_random_prompts(self, rng):
        for _ in range(20):
            triple = random_triple(rng, 3, 3, 4)
            prompt = random_prompt(rng, 3, 4)
            report = predictors_and_bound(triple, prompt, [1.0, -1.0, 0.5])
            assert report.rhs is not None
            assert report.lhs <= report.rhs + 1e-12

    def test_eta_star_is_class_posterior(self, small_triple):
        report = predictors_and_bound(small_triple, small_triple.yz_table(), [0.0, 1.0])
        expected = small_triple.p_xy[:, 1] / small_triple.p_x
        np.testing.assert_allclose(report.eta_star, expected)

    def test_r_length_mismatch(self, small_triple):
        with pytest.raises(DimensionMismatch):
            predictors_and_bound(small_triple, small_triple.yz_table(), [0.0, 1.0, 2.0])

    def test_starved_caption_raises(self, small_triple):
        probs = np.zeros((2, 4))
        probs[0, 0] = probs[1, 1] = 0.5
        with pytest.raises(ZeroConditioner):
            predictors_and_bound(small_triple, PromptTable(probs), [0.0, 1.0])

    def test_r_above_stated_bound(self, small_triple):
        with pytest.raises(DomainError):
            predictors_and_bound(small_triple, small_triple.yz_table(), [0.0, 2.0], b_r=1.0)

    def test_foreign_pretraining_law_skips_bound(self, small_triple, rng):
        pretrain = random_joint(rng, 3, 4)
        report = predictors_and_bound(
            small_triple, small_triple.yz_table(), [0.0, 1.0], pretrain=pretrain
        )
        assert report.rhs is None
        assert report.bound_ok

    def test_estimation_ledger(self, small_triple):
        report = predictors_and_bound(small_triple, small_triple.yz_table(), [0.0, 1.0])
        ledger = report.with_estimate(report.eta_rho)
        assert ledger.estimation_error == pytest.approx(0.0, abs=1e-14)
        assert ledger.total_error == pytest.approx(report.lhs)
        assert ledger.ok

    def test_shifted_ledger_holds(self, small_triple, rng):
        report = predictors_and_bound(small_triple, small_triple.yz_table(), [0.0, 1.0])
        q_x = rng.dirichlet(np.ones(3))
        ledger = report.with_shifted_estimate(report.eta_rho + 0.1, q_x)
        assert ledger.ok


class TestDistributionShift:
    def test_additive_relation(self, rng):
        for _ in range(20):
            p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
            check = distribution_shift_check(p, q, rng.standard_normal(5))
            assert check.additive_ok
            assert check.tv == pytest.approx(float(np.abs(p - q).sum()))

    def test_multiplicative_with_tight_ratio(self, rng):
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        check = distribution_shift_check(p, q, rng.standard_normal(4), likelihood_ratio_bound(p, q))
        assert check.multiplicative_ok is True

    def test_multiplicative_needs_shared_support(self):
        with pytest.raises(NotAbsolutelyContinuous):
            distribution_shift_check([0.5, 0.5], [1.0, 0.0], [1.0, 1.0], b_pq=10.0)

    def test_ratio_bound_rejects_missing_support(self):
        with pytest.raises(NotAbsolutelyContinuous):
            likelihood_ratio_bound([0.5, 0.5], [1.0, 0.0])

    def test_not_a_distribution(self):
        with pytest.raises(DomainError):
            distribution_shift_check([0.5, 0.6], [0.5, 0.5], [1.0, 1.0])
