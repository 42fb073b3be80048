"""Tests for config loading and the experiment sweeps."""

import json

import numpy as np
import pytest

from zeroshotlab.errors import ConfigError
from zeroshotlab.estimators.info_density import fit_rn, split_pairs
from zeroshotlab.eval.harness import (
    CONVERGENCE_COLUMNS,
    DEPENDENCE_COLUMNS,
    PROMPT_COLUMNS,
    THETA_COLUMNS,
    bivariate_gaussian_pairs,
    build_strategy,
    default_config_path,
    load_config,
    prompt_variance_curve,
    run_convergence,
    run_prompt_compare,
    run_sweep,
    run_theta_sweep,
    save_result,
    sub_seed,
    validate_config,
)
from zeroshotlab.eval.persistence import config_hash, sidecar_path
from zeroshotlab.kernels.core import ProductKernel, SpectralFilter, kernel_from_points
from zeroshotlab.logging.run_logger import RunLogger
from zeroshotlab.models import ExperimentConfig, ExperimentKind
from zeroshotlab.prompting.strategies import PromptKind, UnbiasedStrategy
from zeroshotlab.simulation.gaussian import GaussianThetaModel, sample


def _theta_config(**overrides) -> ExperimentConfig:
    doc = {
        "kind": "theta-sweep",
        "seed": 11,
        "replicates": 2,
        "theta_sweep": {
            "theta_grid": [0.0, 1.0],
            "n_test": 200,
            "n_mc": 20,
            "resdep_n_z": 10,
            "resdep_n_x": 10,
            "train": None,
        },
    }
    doc.update(overrides)
    return validate_config(doc)


def _convergence_config(**overrides) -> ExperimentConfig:
    doc = {
        "kind": "convergence",
        "seed": 3,
        "convergence": {
            "n_grid": [20, 40],
            "m_fixed": 20,
            "m_grid": [10, 20],
            "n_fixed": 40,
            "n_test": 30,
            "oracle_n_mc": 20,
            "variance_seeds": 2,
        },
    }
    doc.update(overrides)
    return validate_config(doc)


def _prompt_config(predictor: str = "oracle_density", **overrides) -> ExperimentConfig:
    doc = {
        "kind": "prompt-compare",
        "seed": 5,
        "prompt_compare": {
            "m_grid": [1, 4],
            "k_values": [1, 2],
            "predictor": predictor,
            "n_pretrain": 60,
            "n_test": 100,
            "bias_mc_draws": 200,
            "class_conditional_shift": 0.5,
        },
    }
    doc.update(overrides)
    return validate_config(doc)


def _dependence_config(**overrides) -> ExperimentConfig:
    doc = {
        "kind": "dependence",
        "seed": 2,
        "dependence": {"theta_grid": [0.5], "n": 60, "cca_d": 2, "calibration_n": 60},
    }
    doc.update(overrides)
    return validate_config(doc)


# ── Config loading ──


class TestValidateConfig:
    def test_defaults(self):
        config = validate_config({"kind": "identities"})
        assert config.seed == 0
        assert config.threads == 1

    def test_unknown_field_is_named(self):
        with pytest.raises(ConfigError) as exc:
            validate_config({"kind": "theta-sweep", "theta_sweep": {"bogus": 1}})
        assert "theta_sweep.bogus" in str(exc.value)

    def test_every_problem_reported(self):
        with pytest.raises(ConfigError) as exc:
            validate_config({"kind": "theta-sweep", "seed": -1, "replicates": 0})
        message = str(exc.value)
        assert "seed" in message
        assert "replicates" in message

    def test_theta_out_of_range(self):
        with pytest.raises(ConfigError):
            validate_config({"kind": "theta-sweep", "theta_sweep": {"theta_grid": [1.5]}})

    def test_info_density_needs_four_pairs(self):
        with pytest.raises(ConfigError):
            validate_config({"kind": "convergence", "convergence": {"n_grid": [2, 10]}})

    def test_prompt_compare_rejects_posterior_matched(self):
        with pytest.raises(ConfigError):
            validate_config(
                {"kind": "prompt-compare", "prompt_compare": {"strategies": ["posterior_matched"]}}
            )

    def test_hashed_ignores_execution_fields(self, tmp_path):
        a = _theta_config(threads=1)
        b = _theta_config(threads=8, out=str(tmp_path / "x.csv"))
        assert config_hash(a.hashed()) == config_hash(b.hashed())


class TestLoadConfig:
    def test_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"kind": "dependence", "seed": 4}))
        assert load_config(path).seed == 4

    def test_shipped_theta_sweep_clips_gradients(self):
        config = load_config(default_config_path(ExperimentKind.THETA_SWEEP))
        assert config.theta_sweep.train is not None
        assert config.theta_sweep.train.max_grad_norm == 1.0

    def test_predictions_path_not_hashed(self, tmp_path):
        config = _prompt_config()
        moved = config.model_copy(
            update={
                "prompt_compare": config.prompt_compare.model_copy(
                    update={"predictions_out": tmp_path / "p.csv"}
                )
            }
        )
        assert config_hash(moved.hashed()) == config_hash(config.hashed())

    def test_yaml_with_overrides(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("kind: dependence\nseed: 4\n")
        config = load_config(path, {"seed": 9, "threads": 2})
        assert config.seed == 9
        assert config.threads == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")

    def test_malformed_document(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    @pytest.mark.parametrize("kind", list(ExperimentKind))
    def test_shipped_configs_validate(self, kind):
        config = load_config(default_config_path(kind))
        assert config.kind is kind


class TestSubSeed:
    def test_deterministic_and_key_sensitive(self):
        assert sub_seed(1, 2, 3) == sub_seed(1, 2, 3)
        assert sub_seed(1, 2, 3) != sub_seed(1, 3, 2)
        assert 0 <= sub_seed(1) < 2**63


# ── Sweeps ──


class TestThetaSweep:
    def test_rows_and_columns(self):
        result = run_sweep(_theta_config())
        assert result.header == THETA_COLUMNS
        assert len(result.rows) == 2 * 2 * 2
        assert {r.coords["predictor"] for r in result.rows} == {"direct", "indirect"}
        for row in result.csv_rows():
            assert 0.0 <= row[3] <= 1.0
            assert row[4] >= 0.0

    def test_direct_accuracy_same_for_every_theta(self):
        # X, Y law does not depend on theta and the test sample uses the same seed
        result = run_sweep(_theta_config(replicates=1))
        direct = [r.metrics["accuracy"] for r in result.rows if r.coords["predictor"] == "direct"]
        assert direct[0] == pytest.approx(direct[1], abs=0.01)

    def test_thread_count_does_not_change_results(self):
        single = run_sweep(_theta_config(threads=1))
        pooled = run_sweep(_theta_config(threads=4))
        assert single.csv_rows() == pooled.csv_rows()

    def test_summary(self):
        summary = run_sweep(_theta_config()).summary
        assert "indirect_direct_gap_at_max_theta" in summary
        assert len(summary["median_resdep"]) == 2

    def test_trained_encoders(self):
        config = _theta_config(
            replicates=1,
            theta_sweep={
                "theta_grid": [1.0],
                "n_test": 100,
                "n_mc": 10,
                "resdep_n_z": 5,
                "resdep_n_x": 5,
                "train": {"objectives": ["clip"], "n_train": 50, "steps": 1, "batch_size": 16, "prompts": 10},
            },
        )
        result = run_sweep(config)
        assert [r.coords["predictor"] for r in result.rows] == ["direct", "indirect", "clip"]

    def test_run_log_gets_one_line_per_cell(self, tmp_path):
        run_logger = RunLogger(tmp_path / "runs.jsonl")
        run_sweep(_theta_config(), run_logger)
        entries = run_logger.recent()
        assert len(entries) == 4
        assert all(e["command"] == "theta-sweep" for e in entries)


class TestConvergence:
    def test_rows_cover_both_sweeps(self):
        result = run_sweep(_convergence_config())
        assert result.header == CONVERGENCE_COLUMNS
        assert len(result.rows) == 2 * (2 + 2)
        assert {(r.coords["route"], r.coords["sweep"]) for r in result.rows} == {
            ("conditional_mean", "N"),
            ("conditional_mean", "M"),
            ("info_density", "N"),
            ("info_density", "M"),
        }
        assert all(r.metrics["mse"] >= 0 for r in result.rows)

    def test_prompt_variance_summary(self):
        summary = run_sweep(_convergence_config()).summary
        assert [p["M"] for p in summary["prompt_variance"]] == [10, 20]
        assert len(summary["sweeps"]) == 4

    def test_single_route(self):
        config = _convergence_config(
            convergence={"routes": ["conditional_mean"], "n_grid": [10], "m_fixed": 10, "m_grid": [5], "n_fixed": 10, "n_test": 10, "oracle_n_mc": 5}
        )
        result = run_sweep(config)
        assert len(result.rows) == 2
        assert "prompt_variance" not in result.summary

    def test_thread_count_does_not_change_results(self):
        assert run_sweep(_convergence_config(threads=3)).csv_rows() == run_sweep(_convergence_config()).csv_rows()


class TestPromptCompare:
    @pytest.mark.parametrize("predictor", ["oracle_density", "conditional_mean", "info_density"])
    def test_rows(self, predictor):
        result = run_sweep(_prompt_config(predictor))
        assert result.header == PROMPT_COLUMNS
        assert len(result.rows) == 3 * 2 * 2
        for row in result.rows:
            assert 0.0 <= row.metrics["accuracy"] <= 1.0

    def test_top2_of_two_classes_is_perfect(self):
        result = run_sweep(_prompt_config())
        assert all(r.metrics["accuracy"] == 1.0 for r in result.rows if r.coords["topk"] == 2)

    def test_unbiased_has_zero_bias(self):
        result = run_sweep(_prompt_config())
        biases = {b["strategy"]: b["value"] for b in result.summary["prompt_bias"]}
        assert biases["unbiased"] == 0.0
        assert biases["template_based"] > 0.0

    def test_build_strategy_rejects_posterior_matched(self, gaussian_model):
        with pytest.raises(ConfigError):
            build_strategy(PromptKind.POSTERIOR_MATCHED, gaussian_model, _prompt_config())

    def test_class_conditional_shift(self, gaussian_model):
        strategy = build_strategy(PromptKind.CLASS_CONDITIONAL, gaussian_model, _prompt_config())
        law = strategy.gaussian_law(gaussian_model)
        shift = law.components[1].mean - gaussian_model.law(1).z_marginal.mean
        np.testing.assert_allclose(shift, 0.5)

    def test_predictions_agree_with_top1_rows(self, tmp_path):
        config = _prompt_config()
        config = config.model_copy(
            update={
                "prompt_compare": config.prompt_compare.model_copy(
                    update={"predictions_out": tmp_path / "pred.csv"}
                )
            }
        )
        result = run_sweep(config)
        assert result.predictions is not None
        header, rows = result.predictions
        assert header == [
            "strategy",
            "example_id",
            "true_label",
            "top1",
            "top2",
            "score_0",
            "score_1",
        ]
        assert len(rows) == 3 * 100
        for row in result.rows:
            if row.replicate != 0 or row.coords["m"] != 4 or row.coords["topk"] != 1:
                continue
            mine = [r for r in rows if r[0] == row.coords["strategy"]]
            hits = sum(r[3] == r[2] for r in mine)
            assert hits / len(mine) == pytest.approx(row.metrics["accuracy"])

    def test_predictions_off_by_default(self):
        assert run_sweep(_prompt_config()).predictions is None

    def test_save_writes_predictions(self, tmp_path):
        config = _prompt_config()
        pred = tmp_path / "pred.csv"
        config = config.model_copy(
            update={
                "prompt_compare": config.prompt_compare.model_copy(update={"predictions_out": pred})
            }
        )
        save_result(run_sweep(config), config, tmp_path / "prompt.csv")
        lines = pred.read_text().splitlines()
        assert lines[0].startswith("strategy,example_id,true_label,top1")
        assert len(lines) == 3 * 100 + 1
        meta = json.loads(sidecar_path(pred).read_text())
        assert meta["summary"] == {"replicate": 0, "m": 4}
        assert meta["config_hash"] == config_hash(_prompt_config().hashed())


class TestDependence:
    def test_tidy_rows(self):
        result = run_sweep(_dependence_config())
        assert result.header == DEPENDENCE_COLUMNS
        metrics = {r.coords["metric"] for r in result.rows if r.coords["case"] == "theta_family"}
        assert {"msc", "cca_1", "cca_2", "gamma_xz", "gamma_x", "gamma_z"} <= metrics

    def test_calibration_target(self):
        result = run_sweep(_dependence_config())
        target = [
            r.metrics["value"]
            for r in result.rows
            if r.coords["case"] == "bivariate_gaussian" and r.coords["metric"] == "msc_target"
        ]
        assert target == [pytest.approx(1.0 / 3.0)]

    def test_bivariate_pairs_correlation(self):
        xs, zs = bivariate_gaussian_pairs(0.5, 20000, seed=0)
        assert np.corrcoef(xs[:, 0], zs[:, 0])[0, 1] == pytest.approx(0.5, abs=0.03)


class TestPromptVarianceCurve:
    def test_shape(self):
        model = GaussianThetaModel(theta=1.0)
        batch = sample(model, 60, seed=0)
        kernel = ProductKernel(kernel_from_points(batch.xs), kernel_from_points(batch.zs), x_dim=2)
        rn = fit_rn(split_pairs(batch.xs, batch.zs, 0), kernel, SpectralFilter("tikhonov", 0.1))
        curve = prompt_variance_curve(rn, UnbiasedStrategy(model), [5, 50], 3, batch.xs[:10], seed=1)
        assert [m for m, _ in curve] == [5, 50]
        assert all(v >= 0 for _, v in curve)


class TestRunSweep:
    def test_identities_is_not_a_sweep(self):
        with pytest.raises(ConfigError):
            run_sweep(validate_config({"kind": "identities"}))

    def test_save_result(self, tmp_path):
        config = _dependence_config()
        result = run_sweep(config)
        path = tmp_path / "dep.csv"
        meta_path = save_result(result, config, path)
        assert meta_path == sidecar_path(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(DEPENDENCE_COLUMNS)
        assert len(lines) == len(result.rows) + 1
        meta = json.loads(meta_path.read_text())
        assert meta["command"] == "dependence"
        assert meta["config_hash"] == config_hash(config.hashed())

    def test_dispatch_matches_direct_calls(self):
        theta = _theta_config(replicates=1)
        assert run_sweep(theta).csv_rows() == run_theta_sweep(theta).csv_rows()
        convergence = _convergence_config()
        assert run_sweep(convergence).csv_rows() == run_convergence(convergence).csv_rows()
        prompts = _prompt_config()
        assert run_sweep(prompts).csv_rows() == run_prompt_compare(prompts).csv_rows()
