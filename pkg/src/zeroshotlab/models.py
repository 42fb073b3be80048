"""Pydantic models for experiment configs, result rows and identity reports."""

from enum import StrEnum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from zeroshotlab.prompting.strategies import PromptKind
from zeroshotlab.simulation.gaussian import GaussianThetaModel
from zeroshotlab.ssl.toy import Objective


class ExperimentKind(StrEnum):
    """CLI subcommands."""

    THETA_SWEEP = "theta-sweep"
    CONVERGENCE = "convergence"
    PROMPT_COMPARE = "prompt-compare"
    DEPENDENCE = "dependence"
    IDENTITIES = "identities"


class Route(StrEnum):
    """Estimation routes for the indirect predictor."""

    CONDITIONAL_MEAN = "conditional_mean"
    INFO_DENSITY = "info_density"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GaussianParams(_Strict):
    """Parameters of the theta family."""

    d: int = Field(default=2, ge=1)
    a: float = Field(default=5.0, gt=0)
    b: float = Field(default=6.0, gt=0)
    theta: float = Field(default=1.0, ge=0, le=1)
    p: float = Field(default=0.5, ge=0, le=1)

    def build(self, theta: float | None = None) -> GaussianThetaModel:
        return GaussianThetaModel(
            d=self.d, a=self.a, b=self.b, theta=self.theta if theta is None else theta, p=self.p
        )


class KernelSettings(_Strict):
    """RBF bandwidth: fixed, or ``bandwidth_scale`` times the median heuristic.

    An unset scale falls back to ``Settings.bandwidth_scale``.
    """

    bandwidth: float | None = Field(default=None, gt=0)
    bandwidth_scale: float | None = Field(default=None, gt=0)
    median_points: int = Field(default=500, ge=2)  # subsample size for the heuristic


class EstimatorSettings(_Strict):
    """Filters and lambda schedules of both routes."""

    filter: Literal["cutoff", "tikhonov"] = "tikhonov"
    lam: float | None = Field(default=None, gt=0)  # fixed lambda; schedule when unset
    beta: float = Field(default=1.0, ge=1)
    p: float = Field(default=0.5, gt=0)
    lambda_scale: float = Field(default=1.0, gt=0)
    ridge_lambda: float = Field(default=1e-3, gt=0)
    clamp_nonnegative: bool = False
    kernel_x: KernelSettings = KernelSettings()
    kernel_z: KernelSettings = KernelSettings()


class TrainSettings(_Strict):
    """Toy encoder training inside the theta sweep."""

    objectives: list[Objective] = [Objective.CLIP, Objective.VICREG]
    n_train: int = Field(default=2000, ge=2)
    steps: int = Field(default=150, ge=0)
    lr: float = Field(default=0.05, gt=0)
    batch_size: int = Field(default=128, ge=2)
    out_dim: int = Field(default=2, ge=1)
    max_grad_norm: float | None = Field(default=1.0, gt=0)  # None trains unclipped
    prompts: int = Field(default=500, ge=1)  # M unbiased prompts for class embeddings


class ThetaSweepSettings(_Strict):
    theta_grid: list[float] = Field(default=[0.0, 0.25, 0.5, 0.75, 1.0], min_length=1)
    n_test: int = Field(default=20000, ge=1)
    n_mc: int = Field(default=2000, ge=1)
    resdep_n_z: int = Field(default=400, ge=2)
    resdep_n_x: int = Field(default=200, ge=1)
    train: TrainSettings | None = TrainSettings()

    @field_validator("theta_grid")
    @classmethod
    def _thetas_in_range(cls, v: list[float]) -> list[float]:
        if any(not 0.0 <= t <= 1.0 for t in v):
            raise ValueError("every theta must lie in [0, 1]")
        return v


class ConvergenceSettings(_Strict):
    routes: list[Route] = Field(default=[Route.CONDITIONAL_MEAN, Route.INFO_DENSITY], min_length=1)
    n_grid: list[int] = Field(default=[100, 200, 400, 800, 1600], min_length=1)
    m_fixed: int = Field(default=2000, ge=1)
    m_grid: list[int] = Field(default=[25, 50, 100, 200, 400, 800], min_length=1)
    n_fixed: int = Field(default=1600, ge=4)
    n_test: int = Field(default=500, ge=1)
    oracle_n_mc: int = Field(default=4000, ge=1)
    variance_seeds: int = Field(default=20, ge=2)  # prompt resamples, R_hat frozen
    estimator: EstimatorSettings = EstimatorSettings(lambda_scale=0.05)

    @field_validator("n_grid", "m_grid")
    @classmethod
    def _positive_sizes(cls, v: list[int]) -> list[int]:
        if any(x < 1 for x in v):
            raise ValueError("grid sizes must be positive")
        return v

    @model_validator(mode="after")
    def _splittable(self) -> "ConvergenceSettings":
        if Route.INFO_DENSITY in self.routes and min(self.n_grid) < 4:
            raise ValueError("the info-density route needs N >= 4 to split pairs")
        return self


class PromptCompareSettings(_Strict):
    strategies: list[PromptKind] = Field(
        default=[PromptKind.UNBIASED, PromptKind.CLASS_CONDITIONAL, PromptKind.TEMPLATE_BASED],
        min_length=1,
    )
    m_grid: list[int] = Field(default=[1, 2, 4, 8, 16, 32, 64], min_length=1)
    k_values: list[int] = Field(default=[1], min_length=1)
    predictor: Literal["oracle_density", "conditional_mean", "info_density"] = "oracle_density"
    n_pretrain: int = Field(default=1000, ge=4)
    n_test: int = Field(default=2000, ge=1)
    bias_mc_draws: int = Field(default=20000, ge=2)
    class_conditional_shift: float = 0.0  # moves caption means apart by +-shift per coordinate
    template_offset: float = 1.0  # |v| per coordinate
    template_scale: float = Field(default=2.0, gt=0)
    estimator: EstimatorSettings = EstimatorSettings()
    predictions_out: Path | None = None  # per-example scores, replicate 0 at the largest m

    @field_validator("strategies")
    @classmethod
    def _gaussian_strategies(cls, v: list[PromptKind]) -> list[PromptKind]:
        if PromptKind.POSTERIOR_MATCHED in v:
            raise ValueError("posterior_matched prompts need a discrete source")
        return v

    @field_validator("m_grid", "k_values")
    @classmethod
    def _positive(cls, v: list[int]) -> list[int]:
        if any(x < 1 for x in v):
            raise ValueError("values must be positive")
        return v

    @field_validator("k_values")
    @classmethod
    def _binary_k(cls, v: list[int]) -> list[int]:
        if any(k > 2 for k in v):
            raise ValueError("the Gaussian family has 2 classes; k must be 1 or 2")
        return v


class DependenceSettings(_Strict):
    theta_grid: list[float] = Field(default=[0.0, 0.5, 1.0], min_length=1)
    n: int = Field(default=1000, ge=4)
    lam: float | None = Field(default=None, gt=0)  # Settings.dependence_lambda when unset
    cca_d: int = Field(default=4, ge=2)
    kernel_x: KernelSettings = KernelSettings()
    kernel_z: KernelSettings = KernelSettings()
    calibration_rho: float = Field(default=0.5, gt=-1, lt=1)
    calibration_n: int = Field(default=2000, ge=4)
    omega_rho: float = Field(default=1.0, gt=0.5)
    beta: float = Field(default=1.0, ge=1)
    t: float = Field(default=0.5, ge=0, lt=1)


class IdentitySettings(_Strict):
    instances: int = Field(default=1000, ge=1)
    ssl_batches: int = Field(default=100, ge=1)
    max_alphabet: int = Field(default=6, ge=2)
    fault: str | None = None


class ExperimentConfig(_Strict):
    """A validated experiment document; unknown fields are rejected at every level."""

    kind: ExperimentKind
    seed: int = Field(default=0, ge=0, lt=2**63)
    replicates: int = Field(default=1, ge=1)
    threads: int = Field(default=1, ge=1)
    out: Path | None = None
    gaussian: GaussianParams = GaussianParams()
    theta_sweep: ThetaSweepSettings = ThetaSweepSettings()
    convergence: ConvergenceSettings = ConvergenceSettings()
    prompt_compare: PromptCompareSettings = PromptCompareSettings()
    dependence: DependenceSettings = DependenceSettings()
    identities: IdentitySettings = IdentitySettings()

    def hashed(self) -> "ExperimentConfig":
        """Copy without the execution-only fields, so hashes ignore threads and output paths."""
        prompt_compare = self.prompt_compare.model_copy(update={"predictions_out": None})
        return self.model_copy(
            update={"threads": 1, "out": None, "prompt_compare": prompt_compare}
        )


class ResultRow(BaseModel):
    """One output row: grid coordinates, replicate and metric values."""

    experiment: str
    replicate: int
    coords: dict[str, str | int | float]
    metrics: dict[str, float]
    wall_time_s: float = 0.0  # run log only

    def cells(self, header: list[str]) -> list[str | int | float]:
        merged: dict[str, str | int | float] = {
            **self.coords,
            "replicate": self.replicate,
            **self.metrics,
        }
        return [merged[name] for name in header]


class IdentityCheck(BaseModel):
    """Outcome of one identity or inequality over seeded random instances."""

    name: str
    description: str
    instances: int
    max_deviation: float
    tolerance: float
    passed: bool


class IdentityReport(BaseModel):
    """The identity battery's JSON report."""

    artifact_version: str
    seed: int
    fault: str | None = None
    checks: list[IdentityCheck]
    all_passed: bool
