"""Config-driven sweeps over the Gaussian theta family.

Each sweep expands its config into a list of cells (grid point x replicate), runs the
cells on a thread pool and gathers the rows back in grid order. Every cell derives its
own generators from the base seed and its grid keys, so the table does not depend on
the number of threads.
"""

import json
import logging
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import yaml
from numpy.typing import NDArray
from pydantic import ValidationError

from zeroshotlab.classify.zeroshot import class_embeddings, predictions_csv, scores
from zeroshotlab.config import get_settings
from zeroshotlab.dependence.measures import (
    empirical_cca,
    msc_estimate,
    rate_predictor,
    singular_decay_fit,
)
from zeroshotlab.errors import ConfigError, DomainError, TooFewValues
from zeroshotlab.estimators import conditional_mean as cm
from zeroshotlab.estimators import info_density as rn_route
from zeroshotlab.eval.metrics import loglog_slope, mse_on, threshold_accuracy, topk_accuracy
from zeroshotlab.eval.persistence import config_hash, write_csv
from zeroshotlab.kernels.core import (
    KernelSpec,
    ProductKernel,
    SpectralFilter,
    center,
    eigh_psd,
    gram,
    kernel_from_points,
)
from zeroshotlab.logging.run_logger import RunLogger
from zeroshotlab.models import (
    EstimatorSettings,
    ExperimentConfig,
    ExperimentKind,
    KernelSettings,
    ResultRow,
    Route,
)
from zeroshotlab.prompting.strategies import (
    ClassConditionalStrategy,
    PromptKind,
    PromptStrategy,
    TemplateStrategy,
    UnbiasedStrategy,
    generate,
    prompt_bias,
)
from zeroshotlab.rng import make_rng, replicate_seed
from zeroshotlab.simulation.gaussian import (
    Gaussian,
    GaussianThetaModel,
    SampleBatch,
    direct_posterior,
    indirect_posterior,
    information_density,
    residual_dependence_mc,
    sample,
)
from zeroshotlab.ssl.toy import ToyEncoderPair, train_toy

logger = logging.getLogger(__name__)

T = TypeVar("T")
U = TypeVar("U")

CONFIG_DIR = Path(__file__).parent / "configs"

# r(y) = y: the class-1 posterior for binary labels
CLASS_ONE = np.array([0.0, 1.0])

THETA_COLUMNS = ["theta", "replicate", "predictor", "accuracy", "resdep"]
CONVERGENCE_COLUMNS = ["route", "sweep", "N", "M", "replicate", "mse"]
PROMPT_COLUMNS = ["strategy", "m", "replicate", "topk", "accuracy", "prompt_bias"]
DEPENDENCE_COLUMNS = ["case", "param", "replicate", "metric", "value"]


def _log_structured(event: str, **kwargs: Any) -> None:
    """Log a structured JSON event for experiment milestones."""
    logger.info(json.dumps({"event": event, **kwargs}, default=str))


# --- Config loading ---


def default_config_path(kind: ExperimentKind) -> Path:
    return CONFIG_DIR / f"{kind}.yaml"


def validate_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a raw document, collecting every problem as a ``field.path: reason`` line."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        lines = []
        for err in e.errors():
            where = ".".join(str(part) for part in err["loc"]) or "<root>"
            lines.append(f"{where}: {err['msg']}")
        raise ConfigError("\n".join(lines)) from e


def load_config(path: Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Load a JSON or YAML experiment config, apply top-level overrides and validate it."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = yaml.safe_load(text) if path.suffix in {".yaml", ".yml"} else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: not a valid config document: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate_config({**data, **(overrides or {})})


# --- Execution ---


@dataclass
class ExperimentResult:
    """Rows of one sweep in grid order, with the summary written to the sidecar."""

    command: str
    header: list[str]
    rows: list[ResultRow]
    summary: dict[str, Any] = field(default_factory=dict)
    predictions: tuple[list[str], list[list[str | int | float]]] | None = None

    def csv_rows(self) -> list[list[str | int | float]]:
        return [row.cells(self.header) for row in self.rows]


def sub_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for the stream ``keys`` under ``seed``."""
    return int(make_rng(seed, *keys).integers(0, 2**63))


class _Runner:
    """Ordered fan-out of cells to a thread pool, with per-cell logging."""

    def __init__(self, config: ExperimentConfig, run_logger: RunLogger | None) -> None:
        self.config = config
        self.run_logger = run_logger
        self.command = str(config.kind)
        self.config_hash = config_hash(config.hashed())

    def map(self, fn: Callable[[T], U], items: Sequence[T]) -> list[U]:
        if self.config.threads == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
            return list(pool.map(fn, items))

    def cells(
        self,
        fn: Callable[[T], list[ResultRow]],
        cells: Sequence[T],
        describe: Callable[[T], dict[str, Any]],
    ) -> list[ResultRow]:
        def timed(cell: T) -> tuple[list[ResultRow], float]:
            start = time.perf_counter()
            rows = fn(cell)
            return rows, time.perf_counter() - start

        out: list[ResultRow] = []
        for cell, (rows, elapsed) in zip(cells, self.map(timed, cells), strict=True):
            coords = describe(cell)
            logger.debug("Cell %s: %d rows in %.2fs", coords, len(rows), elapsed)
            if self.run_logger is not None:
                self.run_logger.log_cell(self.command, coords, len(rows), elapsed, self.config_hash)
            out.extend(row.model_copy(update={"wall_time_s": elapsed}) for row in rows)
        _log_structured("cells_complete", command=self.command, cells=len(cells), rows=len(out))
        return out


def _kernel(settings: KernelSettings, pts: NDArray[np.float64]) -> KernelSpec:
    if settings.bandwidth is not None:
        return KernelSpec(bandwidth=settings.bandwidth)
    scale = settings.bandwidth_scale
    if scale is None:
        scale = get_settings().bandwidth_scale
    return kernel_from_points(pts[: settings.median_points], scale)


def _median_by(
    rows: list[ResultRow], key: Callable[[ResultRow], tuple[Any, ...]], metric: str
) -> dict[tuple[Any, ...], float]:
    groups: dict[tuple[Any, ...], list[float]] = {}
    for row in rows:
        groups.setdefault(key(row), []).append(row.metrics[metric])
    return {k: float(np.median(v)) for k, v in groups.items()}


# --- theta-sweep ---


def _trained_accuracy(
    config: ExperimentConfig,
    model: GaussianThetaModel,
    test: SampleBatch,
    objective_index: int,
    seed: int,
) -> float:
    train = config.theta_sweep.train
    assert train is not None
    objective = train.objectives[objective_index]
    pretrain = sample(model, train.n_train, sub_seed(seed, 0))
    encoders = ToyEncoderPair(x_dim=model.d, z_dim=model.d, out_dim=train.out_dim)
    result = train_toy(
        objective,
        pretrain,
        encoders,
        steps=train.steps,
        lr=train.lr,
        seed=sub_seed(seed, 1),
        batch_size=train.batch_size,
        max_grad_norm=train.max_grad_norm,
    )
    prompts = generate(UnbiasedStrategy(model), train.prompts, sub_seed(seed, 2))
    embeddings = class_embeddings(
        prompts.ys,
        prompts.zs,
        lambda zs: encoders.encode_z(result.params, zs),
        n_classes=2,
    )
    return topk_accuracy(scores(encoders.encode_x(result.params, test.xs), embeddings), test.ys, 1)


def _theta_cell(config: ExperimentConfig, theta: float, replicate: int) -> list[ResultRow]:
    s = config.theta_sweep
    seed = replicate_seed(config.seed, replicate)
    model = config.gaussian.build(theta)
    test = sample(model, s.n_test, sub_seed(seed, 0))

    accuracy = {
        "direct": threshold_accuracy(direct_posterior(model, test.xs), test.ys),
        "indirect": threshold_accuracy(
            indirect_posterior(model, test.xs, s.n_mc, sub_seed(seed, 1)), test.ys
        ),
    }
    resdep = residual_dependence_mc(model, s.resdep_n_z, s.resdep_n_x, sub_seed(seed, 2))
    if s.train is not None:
        for i, objective in enumerate(s.train.objectives):
            accuracy[str(objective)] = _trained_accuracy(
                config, model, test, i, sub_seed(seed, 3, i)
            )

    return [
        ResultRow(
            experiment=str(config.kind),
            replicate=replicate,
            coords={"theta": theta, "predictor": name},
            metrics={"accuracy": acc, "resdep": resdep},
        )
        for name, acc in accuracy.items()
    ]


def run_theta_sweep(
    config: ExperimentConfig, run_logger: RunLogger | None = None
) -> ExperimentResult:
    """Accuracy of direct, indirect and trained-encoder predictors across theta.

    Columns: theta, replicate, predictor, accuracy, resdep.
    """
    runner = _Runner(config, run_logger)
    cells = [(t, rep) for t in config.theta_sweep.theta_grid for rep in range(config.replicates)]
    rows = runner.cells(
        lambda cell: _theta_cell(config, *cell),
        cells,
        lambda cell: {"theta": cell[0], "replicate": cell[1]},
    )

    acc = _median_by(rows, lambda r: (r.coords["theta"], r.coords["predictor"]), "accuracy")
    resdep = _median_by(rows, lambda r: (r.coords["theta"],), "resdep")
    top = max(config.theta_sweep.theta_grid)
    summary = {
        "median_accuracy": [
            {"theta": t, "predictor": p, "accuracy": v} for (t, p), v in acc.items()
        ],
        "median_resdep": [{"theta": t, "resdep": v} for (t,), v in resdep.items()],
        "indirect_direct_gap_at_max_theta": abs(acc[(top, "indirect")] - acc[(top, "direct")]),
    }
    return ExperimentResult(str(config.kind), THETA_COLUMNS, rows, summary)


# --- convergence ---


@dataclass(frozen=True, eq=False)
class _ConvergenceFixture:
    """Per-replicate pools: N and M sweeps take nested prefixes of them."""

    seed: int
    pool: SampleBatch
    prompt_ys: NDArray[np.int64]
    prompt_zs: NDArray[np.float64]
    test_xs: NDArray[np.float64]
    oracle: NDArray[np.float64]
    kernel_x: KernelSpec
    kernel_z: KernelSpec


def _convergence_fixture(
    config: ExperimentConfig, model: GaussianThetaModel, replicate: int
) -> _ConvergenceFixture:
    s = config.convergence
    seed = replicate_seed(config.seed, replicate)
    pool = sample(model, max(*s.n_grid, s.n_fixed), sub_seed(seed, 0))
    prompts = generate(UnbiasedStrategy(model), max(*s.m_grid, s.m_fixed), sub_seed(seed, 1))
    test = sample(model, s.n_test, sub_seed(seed, 2))
    oracle = np.atleast_1d(indirect_posterior(model, test.xs, s.oracle_n_mc, sub_seed(seed, 3)))
    return _ConvergenceFixture(
        seed=seed,
        pool=pool,
        prompt_ys=prompts.ys,
        prompt_zs=prompts.zs,
        test_xs=test.xs,
        oracle=oracle,
        kernel_x=_kernel(s.estimator.kernel_x, pool.xs),
        kernel_z=_kernel(s.estimator.kernel_z, pool.zs),
    )


def _fit_rn(
    est: EstimatorSettings,
    xs: NDArray[np.float64],
    zs: NDArray[np.float64],
    kernel_x: KernelSpec,
    kernel_z: KernelSpec,
    seed: int,
) -> rn_route.RnModel:
    split = rn_route.split_pairs(xs, zs, seed)
    kernel = ProductKernel(x_kernel=kernel_x, z_kernel=kernel_z, x_dim=xs.shape[1])
    lam = est.lam or rn_route.lambda_schedule_rn(
        split.n_paired, split.n_unpaired, est.beta, kernel.k_max, est.lambda_scale
    )
    return rn_route.fit_rn(split, kernel, SpectralFilter(est.filter, lam), est.clamp_nonnegative)


def _fit_cme(
    est: EstimatorSettings,
    xs: NDArray[np.float64],
    zs: NDArray[np.float64],
    kernel_x: KernelSpec,
    kernel_z: KernelSpec,
) -> cm.CmeModel:
    lam = est.lam or cm.lambda_schedule_cme(xs.shape[0], est.beta, est.p, est.lambda_scale)
    return cm.fit_cme(xs, zs, kernel_x, SpectralFilter(est.filter, lam), kernel_z=kernel_z)


def _route_eta(
    config: ExperimentConfig, fx: _ConvergenceFixture, route: Route, n: int, m: int
) -> NDArray[np.float64]:
    est = config.convergence.estimator
    xs, zs = fx.pool.xs[:n], fx.pool.zs[:n]
    ys_p, zs_p = fx.prompt_ys[:m], fx.prompt_zs[:m]
    if route is Route.CONDITIONAL_MEAN:
        cme = _fit_cme(est, xs, zs, fx.kernel_x, fx.kernel_z)
        ridge = cm.fit_g_rho(ys_p, zs_p, CLASS_ONE, fx.kernel_z, est.ridge_lambda)
        return cm.predict_eta(cme, ridge, fx.test_xs)
    rn = _fit_rn(est, xs, zs, fx.kernel_x, fx.kernel_z, sub_seed(fx.seed, 4, n))
    prompts = rn_route.PromptMeasure.uniform(ys_p, zs_p)
    return rn_route.predict_eta(rn, prompts, CLASS_ONE, fx.test_xs)


def prompt_variance_curve(
    rn: rn_route.RnModel,
    strategy: PromptStrategy,
    m_grid: Sequence[int],
    n_seeds: int,
    xs: NDArray[np.float64],
    seed: int,
) -> list[tuple[int, float]]:
    """Variance of eta_hat over prompt resamples with R_hat frozen, averaged over ``xs``."""
    curve = []
    for m in m_grid:
        preds = []
        for k in range(n_seeds):
            prompts = generate(strategy, m, sub_seed(seed, m, k))
            measure = rn_route.PromptMeasure.from_prompt_set(prompts)
            preds.append(rn_route.predict_eta(rn, measure, CLASS_ONE, xs))
        curve.append((m, float(np.var(np.stack(preds), axis=0, ddof=1).mean())))
    return curve


def _sweep_summary(rows: list[ResultRow]) -> list[dict[str, Any]]:
    medians = _median_by(
        rows, lambda r: (r.coords["route"], r.coords["sweep"], r.coords["N"], r.coords["M"]), "mse"
    )
    out = []
    for route, sweep in dict.fromkeys((k[0], k[1]) for k in medians):
        axis = 2 if sweep == "N" else 3
        points = sorted((k[axis], v) for k, v in medians.items() if (k[0], k[1]) == (route, sweep))
        grid = [float(p[0]) for p in points]
        mse = [p[1] for p in points]
        entry: dict[str, Any] = {
            "route": route,
            "sweep": sweep,
            "grid": grid,
            "median_mse": mse,
            "monotone": bool(np.all(np.diff(mse) < 0)),
        }
        try:
            entry["slope"] = loglog_slope(grid, mse)
        except TooFewValues:
            entry["slope"] = None
        out.append(entry)
    return out


def run_convergence(
    config: ExperimentConfig, run_logger: RunLogger | None = None
) -> ExperimentResult:
    """MSE against the oracle eta_rho over the N grid (M fixed) and the M grid (N fixed).

    Columns: route, sweep, N, M, replicate, mse. The sidecar summary carries the
    median curves, their log-log slopes and, for the info-density route, the
    prompt-variance curve with R_hat frozen.
    """
    s = config.convergence
    runner = _Runner(config, run_logger)
    model = config.gaussian.build()
    fixtures = runner.map(
        lambda rep: _convergence_fixture(config, model, rep), list(range(config.replicates))
    )

    cells: list[tuple[Route, str, int, int, int]] = []
    for route in s.routes:
        for rep in range(config.replicates):
            cells += [(route, "N", n, s.m_fixed, rep) for n in s.n_grid]
            cells += [(route, "M", s.n_fixed, m, rep) for m in s.m_grid]

    def run_cell(cell: tuple[Route, str, int, int, int]) -> list[ResultRow]:
        route, sweep, n, m, rep = cell
        fx = fixtures[rep]
        mse = mse_on(_route_eta(config, fx, route, n, m), fx.oracle, fx.test_xs)
        return [
            ResultRow(
                experiment=str(config.kind),
                replicate=rep,
                coords={"route": str(route), "sweep": sweep, "N": n, "M": m},
                metrics={"mse": mse},
            )
        ]

    rows = runner.cells(
        run_cell,
        cells,
        lambda c: {"route": str(c[0]), "sweep": c[1], "N": c[2], "M": c[3], "replicate": c[4]},
    )
    summary: dict[str, Any] = {"sweeps": _sweep_summary(rows)}

    if Route.INFO_DENSITY in s.routes:
        fx = fixtures[0]
        rn = _fit_rn(
            s.estimator,
            fx.pool.xs[: s.n_fixed],
            fx.pool.zs[: s.n_fixed],
            fx.kernel_x,
            fx.kernel_z,
            sub_seed(fx.seed, 5),
        )
        curve = prompt_variance_curve(
            rn,
            UnbiasedStrategy(model),
            s.m_grid,
            s.variance_seeds,
            fx.test_xs,
            sub_seed(fx.seed, 6),
        )
        summary["prompt_variance"] = [{"M": m, "variance": v} for m, v in curve]
        summary["prompt_variance_slope"] = (
            loglog_slope([m for m, _ in curve], [v for _, v in curve]) if len(curve) > 1 else None
        )
    return ExperimentResult(str(config.kind), CONVERGENCE_COLUMNS, rows, summary)


# --- prompt-compare ---

Scorer = Callable[[NDArray[np.int64], NDArray[np.float64]], NDArray[np.float64]]


def build_strategy(
    kind: PromptKind, model: GaussianThetaModel, config: ExperimentConfig
) -> PromptStrategy:
    """Gaussian-backed strategy for ``kind`` with the config's shift and template settings."""
    s = config.prompt_compare
    if kind is PromptKind.UNBIASED:
        return UnbiasedStrategy(model)
    if kind is PromptKind.CLASS_CONDITIONAL:
        if s.class_conditional_shift == 0.0:
            return ClassConditionalStrategy(model)
        laws = []
        for y in (0, 1):
            law = model.law(y).z_marginal
            shift = (2 * y - 1) * s.class_conditional_shift
            laws.append(Gaussian(mean=law.mean + shift, chol=law.chol))
        return ClassConditionalStrategy(model, conditionals=(laws[0], laws[1]))
    if kind is PromptKind.TEMPLATE_BASED:
        return TemplateStrategy.binary(np.full(model.d, s.template_offset), s.template_scale)
    raise ConfigError(f"prompt_compare.strategies: {kind} needs a discrete source")


def _class_means(grid: NDArray[np.float64], ys: NDArray[np.int64]) -> NDArray[np.float64]:
    """Per-class mean of grid columns; a class without prompts scores -inf."""
    out = np.full((grid.shape[0], 2), -np.inf)
    for c in (0, 1):
        if np.any(ys == c):
            out[:, c] = grid[:, ys == c].mean(axis=1)
    return out


def _scorer(
    config: ExperimentConfig, model: GaussianThetaModel, test_xs: NDArray[np.float64], seed: int
) -> Scorer:
    s = config.prompt_compare
    if s.predictor == "oracle_density":
        return lambda ys, zs: _class_means(information_density(model, test_xs, zs), ys)

    pretrain = sample(model, s.n_pretrain, sub_seed(seed, 0))
    kernel_x = _kernel(s.estimator.kernel_x, pretrain.xs)
    kernel_z = _kernel(s.estimator.kernel_z, pretrain.zs)
    if s.predictor == "info_density":
        rn = _fit_rn(s.estimator, pretrain.xs, pretrain.zs, kernel_x, kernel_z, sub_seed(seed, 1))
        return lambda ys, zs: _class_means(rn.evaluate_grid(test_xs, zs), ys)

    cme = _fit_cme(s.estimator, pretrain.xs, pretrain.zs, kernel_x, kernel_z)
    weights = cme.weights(test_xs)

    def score(ys: NDArray[np.int64], zs: NDArray[np.float64]) -> NDArray[np.float64]:
        columns = []
        for c in (0, 1):
            ridge = cm.fit_g_rho(ys, zs, np.eye(2)[c], kernel_z, s.estimator.ridge_lambda)
            columns.append(weights @ ridge.predict(cme.zs))
        return np.stack(columns, axis=1)

    return score


def run_prompt_compare(
    config: ExperimentConfig, run_logger: RunLogger | None = None
) -> ExperimentResult:
    """Top-k accuracy against the number of prompts per class, for each strategy.

    Columns: strategy, m, replicate, topk, accuracy, prompt_bias. Non-per-class
    strategies draw M = 2m prompts so every strategy sees the same prompt budget.
    """
    s = config.prompt_compare
    runner = _Runner(config, run_logger)
    model = config.gaussian.build()
    strategies = [build_strategy(kind, model, config) for kind in s.strategies]
    biases = [
        prompt_bias(st, model, CLASS_ONE, n_mc=s.bias_mc_draws, seed=sub_seed(config.seed, 7))
        for st in strategies
    ]

    def fixture(rep: int) -> tuple[SampleBatch, Scorer]:
        seed = replicate_seed(config.seed, rep)
        test = sample(model, s.n_test, sub_seed(seed, 0))
        return test, _scorer(config, model, test.xs, sub_seed(seed, 1))

    fixtures = runner.map(fixture, list(range(config.replicates)))
    cells = [
        (i, m, rep)
        for i in range(len(strategies))
        for m in s.m_grid
        for rep in range(config.replicates)
    ]

    def run_cell(cell: tuple[int, int, int]) -> list[ResultRow]:
        i, m, rep = cell
        strategy = strategies[i]
        test, scorer = fixtures[rep]
        count = m if strategy.per_class else m * strategy.n_classes
        prompts = generate(strategy, count, sub_seed(replicate_seed(config.seed, rep), 10, i, m))
        class_scores = scorer(prompts.ys, prompts.zs)
        return [
            ResultRow(
                experiment=str(config.kind),
                replicate=rep,
                coords={"strategy": str(strategy.kind), "m": m, "topk": k},
                metrics={
                    "accuracy": topk_accuracy(class_scores, test.ys, k),
                    "prompt_bias": biases[i].value,
                },
            )
            for k in s.k_values
        ]

    rows = runner.cells(
        run_cell,
        cells,
        lambda c: {"strategy": str(strategies[c[0]].kind), "m": c[1], "replicate": c[2]},
    )
    acc = _median_by(
        [r for r in rows if r.coords["topk"] == s.k_values[0]],
        lambda r: (r.coords["strategy"], r.coords["m"]),
        "accuracy",
    )
    summary = {
        "prompt_bias": [
            {"strategy": str(st.kind), "value": b.value, "stderr": b.stderr, "exact": b.exact}
            for st, b in zip(strategies, biases, strict=True)
        ],
        "median_accuracy": [{"strategy": k, "m": m, "accuracy": v} for (k, m), v in acc.items()],
    }
    predictions: tuple[list[str], list[list[str | int | float]]] | None = None
    if s.predictions_out is not None:
        predictions = _prediction_table(config, strategies, fixtures[0])
    return ExperimentResult(str(config.kind), PROMPT_COLUMNS, rows, summary, predictions)


def _prediction_table(
    config: ExperimentConfig,
    strategies: list[PromptStrategy],
    fixture: tuple[SampleBatch, Scorer],
) -> tuple[list[str], list[list[str | int | float]]]:
    """Per-example scores and top-k classes for replicate 0 at the largest m.

    Prompts are regenerated from the same stream as the matching sweep cell, so the
    table agrees with the accuracy rows.
    """
    s = config.prompt_compare
    test, scorer = fixture
    m = max(s.m_grid)
    k = max(s.k_values)
    header: list[str] = []
    rows: list[list[str | int | float]] = []
    for i, strategy in enumerate(strategies):
        count = m if strategy.per_class else m * strategy.n_classes
        prompts = generate(strategy, count, sub_seed(replicate_seed(config.seed, 0), 10, i, m))
        cols, table = predictions_csv(scorer(prompts.ys, prompts.zs), test.ys, k)
        header = ["strategy", *cols]
        for row in table:
            rows.append([str(strategy.kind), *row])
    return header, rows


# --- dependence ---


def _spectrum_sqrt(kernel: KernelSpec, pts: NDArray[np.float64], count: int) -> NDArray[np.float64]:
    """Square roots of the top centered-Gram eigenvalues, scaled by 1/n."""
    values = eigh_psd(center(gram(kernel, pts)).matrix / pts.shape[0]).values[:count]
    return np.sqrt(np.maximum(values, 0.0))


def _dependence_metrics(
    config: ExperimentConfig, theta: float, replicate: int
) -> list[tuple[str, float]]:
    s = config.dependence
    seed = replicate_seed(config.seed, replicate)
    data = sample(config.gaussian.build(theta), s.n, sub_seed(seed, 0, int(theta * 1e6)))
    kernel_x = _kernel(s.kernel_x, data.xs)
    kernel_z = _kernel(s.kernel_z, data.zs)
    lam = s.lam or get_settings().dependence_lambda

    msc = msc_estimate(data.xs, data.zs, kernel_x, kernel_z, lam)
    metrics: list[tuple[str, float]] = [("msc", msc)]
    cca = empirical_cca(data.xs, data.zs, kernel_x, kernel_z, lam, s.cca_d)
    metrics += [(f"cca_{i + 1}", float(c)) for i, c in enumerate(cca.correlations)]

    # sigma_1 = 1 belongs to the constant pair the centered estimator drops
    fit = singular_decay_fit(np.concatenate([[1.0], cca.correlations]))
    metrics += [("gamma_xz", fit.gamma), ("msc_implied_gamma", fit.msc_implied_gamma)]
    gamma_x = singular_decay_fit(_spectrum_sqrt(kernel_x, data.xs, s.cca_d + 1)).gamma
    gamma_z = singular_decay_fit(_spectrum_sqrt(kernel_z, data.zs, s.cca_d + 1)).gamma
    metrics += [("gamma_x", gamma_x), ("gamma_z", gamma_z)]
    try:
        rates = rate_predictor(gamma_x, gamma_z, fit.gamma, s.t, s.omega_rho, s.beta)
    except DomainError as e:
        logger.debug("No rate report at theta=%s: %s", theta, e)
    else:
        metrics += [
            ("q", rates.q),
            ("conditional_mean_exponent", rates.conditional_mean_exponent),
            ("prompt_exponent", rates.prompt_exponent),
            ("info_density_exponent", rates.info_density_exponent),
        ]
    return metrics


def bivariate_gaussian_pairs(
    rho: float, n: int, seed: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """x ~ N(0, 1), z = rho x + sqrt(1 - rho^2) e; the true MSC is rho^2 / (1 - rho^2)."""
    rng = make_rng(seed)
    x = rng.standard_normal(n)
    z = rho * x + np.sqrt(1.0 - rho**2) * rng.standard_normal(n)
    return x[:, None], z[:, None]


def _calibration_metrics(config: ExperimentConfig, replicate: int) -> list[tuple[str, float]]:
    s = config.dependence
    rho = s.calibration_rho
    seed = sub_seed(replicate_seed(config.seed, replicate), 1)
    xs, zs = bivariate_gaussian_pairs(rho, s.calibration_n, seed)
    lam = s.lam or get_settings().dependence_lambda
    estimate = msc_estimate(xs, zs, _kernel(s.kernel_x, xs), _kernel(s.kernel_z, zs), lam)
    return [("msc", estimate), ("msc_target", rho**2 / (1.0 - rho**2))]


def run_dependence(
    config: ExperimentConfig, run_logger: RunLogger | None = None
) -> ExperimentResult:
    """Kernel dependence report per theta, plus the bivariate-Gaussian calibration case.

    Columns: case, param, replicate, metric, value. ``param`` is theta for the Gaussian
    family and rho for the calibration case.
    """
    s = config.dependence
    runner = _Runner(config, run_logger)
    cells: list[tuple[str, float, int]] = [
        ("theta_family", t, rep) for t in s.theta_grid for rep in range(config.replicates)
    ]
    cells += [("bivariate_gaussian", s.calibration_rho, rep) for rep in range(config.replicates)]

    def run_cell(cell: tuple[str, float, int]) -> list[ResultRow]:
        case, param, rep = cell
        metrics = (
            _dependence_metrics(config, param, rep)
            if case == "theta_family"
            else _calibration_metrics(config, rep)
        )
        return [
            ResultRow(
                experiment=str(config.kind),
                replicate=rep,
                coords={"case": case, "param": param, "metric": name},
                metrics={"value": value},
            )
            for name, value in metrics
        ]

    rows = runner.cells(run_cell, cells, lambda c: {"case": c[0], "param": c[1], "replicate": c[2]})
    medians = _median_by(
        rows, lambda r: (r.coords["case"], r.coords["param"], r.coords["metric"]), "value"
    )
    summary = {
        "median": [
            {"case": c, "param": p, "metric": name, "value": v}
            for (c, p, name), v in medians.items()
        ]
    }
    return ExperimentResult(str(config.kind), DEPENDENCE_COLUMNS, rows, summary)


# --- Output ---

SWEEPS: dict[ExperimentKind, Callable[[ExperimentConfig, RunLogger | None], ExperimentResult]] = {
    ExperimentKind.THETA_SWEEP: run_theta_sweep,
    ExperimentKind.CONVERGENCE: run_convergence,
    ExperimentKind.PROMPT_COMPARE: run_prompt_compare,
    ExperimentKind.DEPENDENCE: run_dependence,
}


def run_sweep(config: ExperimentConfig, run_logger: RunLogger | None = None) -> ExperimentResult:
    """Run the sweep named by ``config.kind``."""
    if config.kind not in SWEEPS:
        raise ConfigError(f"kind: {config.kind} is not a CSV sweep")
    _log_structured(
        "experiment_start",
        command=str(config.kind),
        seed=config.seed,
        replicates=config.replicates,
        threads=config.threads,
    )
    start = time.perf_counter()
    result = SWEEPS[config.kind](config, run_logger)
    _log_structured(
        "experiment_complete",
        command=result.command,
        rows=len(result.rows),
        wall_time_s=round(time.perf_counter() - start, 3),
    )
    return result


def save_result(result: ExperimentResult, config: ExperimentConfig, path: Path) -> Path:
    """Write the CSV and its sidecar; returns the sidecar path.

    A prompt-compare prediction table is written to ``predictions_out`` with its own sidecar.
    """
    hashed = config.hashed()
    if result.predictions is not None and config.prompt_compare.predictions_out is not None:
        header, rows = result.predictions
        write_csv(
            config.prompt_compare.predictions_out,
            header,
            rows,
            config=hashed,
            seed=config.seed,
            command=result.command,
            summary={"replicate": 0, "m": max(config.prompt_compare.m_grid)},
        )
    return write_csv(
        path,
        result.header,
        result.csv_rows(),
        config=hashed,
        seed=config.seed,
        command=result.command,
        summary=result.summary,
    )


def print_summary(result: ExperimentResult) -> None:
    """Print a short human-readable summary to stdout."""
    print(f"\n{'=' * 70}")
    print(f"{result.command}: {len(result.rows)} rows")
    print(f"{'=' * 70}")
    for key, value in result.summary.items():
        if isinstance(value, list):
            print(f"{key}:")
            for entry in value:
                print(f"  {json.dumps(entry, default=str)}")
        else:
            print(f"{key}: {value}")
    print(f"{'=' * 70}\n")
