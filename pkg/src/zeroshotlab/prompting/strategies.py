"""Prompting strategies as samplers over (Y, Z), and exact prompt-bias evaluation.

Three strategies cover how prompts are obtained in practice:

- ``unbiased``: (y, z) drawn from the true joint P_{Y,Z}.
- ``class_conditional``: uniform labels, captions from a per-class law rho_{Z|Y=y}.
- ``template_based``: offsets u_1..u_m drawn once and inserted into every class,
  z = f(y, u) = c_y + u with u ~ N(0, s^2 I). Binary templates use c_y = (2y - 1) v.

A fourth, ``posterior_matched``, draws z from a chosen caption marginal and labels it
with the true P(y | z); it has zero prompt bias but can mismatch the pre-training
caption marginal.

Discrete sources emit captions as one-hot vectors over the Z alphabet so that prompt
sets feed the kernel estimators directly.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax

from zeroshotlab.config import get_settings
from zeroshotlab.errors import (
    DimensionMismatch,
    DomainError,
    NotAbsolutelyContinuous,
    Unsupported,
    ZeroConditioner,
)
from zeroshotlab.estimators.conditional_mean import LabelFunction, label_values
from zeroshotlab.oracle.discrete import POSITIVITY_TOL, DiscreteTriple, PromptTable
from zeroshotlab.rng import make_rng
from zeroshotlab.simulation.gaussian import Gaussian, GaussianThetaModel, McEstimate

logger = logging.getLogger(__name__)

Source = DiscreteTriple | GaussianThetaModel


class PromptKind(StrEnum):
    """Prompting strategy families."""

    TEMPLATE_BASED = "template_based"
    CLASS_CONDITIONAL = "class_conditional"
    UNBIASED = "unbiased"
    POSTERIOR_MATCHED = "posterior_matched"


@dataclass(frozen=True, eq=False)
class GaussianPromptLaw:
    """rho_{Y,Z} with Gaussian caption conditionals: prior over labels and one law per label."""

    prior: NDArray[np.float64]
    components: tuple[Gaussian, ...]

    def _log_terms(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """log rho_Y(y) + log rho(z | y), stacked along the last axis."""
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.prior)
        pairs = zip(log_prior, self.components, strict=True)
        return np.stack([lp + comp.logpdf(z) for lp, comp in pairs], axis=-1)

    def regression(
        self, z: NDArray[np.float64], r_vals: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """g(z) = E_rho[r(Y) | Z=z]."""
        return np.asarray(softmax(self._log_terms(z), axis=-1) @ r_vals)

    def log_caption_density(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(np.logaddexp.reduce(self._log_terms(z), axis=-1))


def _true_gaussian_law(model: GaussianThetaModel) -> GaussianPromptLaw:
    return GaussianPromptLaw(
        prior=np.array([1.0 - model.p, model.p]),
        components=(model.law(0).z_marginal, model.law(1).z_marginal),
    )


def _one_hot(indices: NDArray[np.int64], size: int) -> NDArray[np.float64]:
    return np.eye(size)[indices]


class PromptStrategy(Protocol):
    """A sampler over (y, z) that can describe itself as an exact prompt law."""

    @property
    def kind(self) -> PromptKind: ...

    @property
    def n_classes(self) -> int: ...

    @property
    def per_class(self) -> bool: ...

    def draw(self, count: int, seed: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]: ...

    def table(self, triple: DiscreteTriple) -> PromptTable: ...

    def gaussian_law(self, model: GaussianThetaModel) -> GaussianPromptLaw: ...


@dataclass(frozen=True, eq=False)
class UnbiasedStrategy:
    """Prompts drawn from the source's joint P_{Y,Z}."""

    source: Source
    kind: PromptKind = field(default=PromptKind.UNBIASED, init=False)
    per_class: bool = field(default=False, init=False)

    @property
    def n_classes(self) -> int:
        return self.source.y_size if isinstance(self.source, DiscreteTriple) else 2

    def draw(self, count: int, seed: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        rng = make_rng(seed)
        if isinstance(self.source, DiscreteTriple):
            yz = self.source.yz_table().probs
            cells = rng.choice(yz.size, size=count, p=yz.ravel())
            ys, zs = np.divmod(cells, yz.shape[1])
            return ys.astype(np.int64), _one_hot(zs, yz.shape[1])
        model = self.source
        ys = (rng.random(count) < model.p).astype(np.int64)
        eps = rng.standard_normal((count, model.d))
        zs = np.where(
            ys[:, None] == 1,
            model.law(1).z_marginal.transform(eps),
            model.law(0).z_marginal.transform(eps),
        )
        return ys, zs

    def table(self, triple: DiscreteTriple) -> PromptTable:
        if not isinstance(self.source, DiscreteTriple):
            raise Unsupported("a Gaussian-backed strategy has no prompt table")
        return self.source.yz_table()

    def gaussian_law(self, model: GaussianThetaModel) -> GaussianPromptLaw:
        if not isinstance(self.source, GaussianThetaModel):
            raise Unsupported("a table-backed strategy has no Gaussian caption law")
        return _true_gaussian_law(self.source)


@dataclass(frozen=True, eq=False)
class ClassConditionalStrategy:
    """Uniform labels with captions from rho_{Z|Y=y}.

    ``conditionals`` defaults to the source's own P(z | y). For a discrete source it is
    a |Y| x |Z| row-stochastic matrix; for a Gaussian source a pair of caption laws.
    """

    source: Source
    conditionals: NDArray[np.float64] | tuple[Gaussian, Gaussian] | None = None
    kind: PromptKind = field(default=PromptKind.CLASS_CONDITIONAL, init=False)
    per_class: bool = field(default=True, init=False)

    def __post_init__(self) -> None:
        if isinstance(self.source, DiscreteTriple) and self.conditionals is not None:
            cond = np.asarray(self.conditionals, dtype=np.float64)
            if cond.shape != (self.source.y_size, self.source.z_size):
                raise DimensionMismatch("conditionals must be indexed by (y, z)")
            if np.any(cond < 0) or np.any(np.abs(cond.sum(axis=1) - 1.0) > 1e-12):
                raise DomainError("each row of the conditionals must be a probability vector")
            object.__setattr__(self, "conditionals", cond)

    @property
    def n_classes(self) -> int:
        return self.source.y_size if isinstance(self.source, DiscreteTriple) else 2

    def _discrete_conditionals(self, triple: DiscreteTriple) -> NDArray[np.float64]:
        if isinstance(self.conditionals, np.ndarray):
            return self.conditionals
        yz = triple.yz_table().probs
        p_y = yz.sum(axis=1)
        if np.any(p_y <= POSITIVITY_TOL):
            raise ZeroConditioner(f"P_Y vanishes at y={int(np.argmin(p_y))}")
        return yz / p_y[:, None]

    def _gaussian_conditionals(self, model: GaussianThetaModel) -> tuple[Gaussian, Gaussian]:
        if isinstance(self.conditionals, tuple):
            return self.conditionals
        return model.law(0).z_marginal, model.law(1).z_marginal

    def draw(self, count: int, seed: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        ys, zs = [], []
        for y in range(self.n_classes):
            rng = make_rng(seed, y)
            if isinstance(self.source, DiscreteTriple):
                row = self._discrete_conditionals(self.source)[y]
                zs.append(_one_hot(rng.choice(row.size, size=count, p=row), row.size))
            else:
                law = self._gaussian_conditionals(self.source)[y]
                zs.append(law.transform(rng.standard_normal((count, law.dim))))
            ys.append(np.full(count, y, dtype=np.int64))
        return np.concatenate(ys), np.vstack(zs)

    def table(self, triple: DiscreteTriple) -> PromptTable:
        if not isinstance(self.source, DiscreteTriple):
            raise Unsupported("a Gaussian-backed strategy has no prompt table")
        cond = self._discrete_conditionals(self.source)
        return PromptTable(cond / cond.shape[0])

    def gaussian_law(self, model: GaussianThetaModel) -> GaussianPromptLaw:
        if not isinstance(self.source, GaussianThetaModel):
            raise Unsupported("a table-backed strategy has no Gaussian caption law")
        return GaussianPromptLaw(
            prior=np.array([0.5, 0.5]), components=self._gaussian_conditionals(self.source)
        )


@dataclass(frozen=True, eq=False)
class TemplateStrategy:
    """Shared template offsets inserted into every class: z = offsets[y] + u, u ~ N(0, s^2 I)."""

    offsets: NDArray[np.float64]
    scale: float = 1.0
    kind: PromptKind = field(default=PromptKind.TEMPLATE_BASED, init=False)
    per_class: bool = field(default=True, init=False)

    def __post_init__(self) -> None:
        offsets = np.atleast_2d(np.asarray(self.offsets, dtype=np.float64))
        if offsets.shape[0] < 2:
            raise DimensionMismatch("templates need an offset per class, at least two classes")
        if self.scale <= 0:
            raise DomainError(f"template scale must be positive, got {self.scale!r}")
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def binary(cls, direction: ArrayLike, scale: float = 1.0) -> "TemplateStrategy":
        """f(y, u) = (2y - 1) v + u."""
        v = np.asarray(direction, dtype=np.float64)
        return cls(offsets=np.stack([-v, v]), scale=scale)

    @property
    def n_classes(self) -> int:
        return int(self.offsets.shape[0])

    @property
    def dim(self) -> int:
        return int(self.offsets.shape[1])

    def draw(self, count: int, seed: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        u = self.scale * make_rng(seed).standard_normal((count, self.dim))
        ys = np.repeat(np.arange(self.n_classes, dtype=np.int64), count)
        zs = (self.offsets[:, None, :] + u[None, :, :]).reshape(-1, self.dim)
        return ys, zs

    def table(self, triple: DiscreteTriple) -> PromptTable:
        raise Unsupported("template prompts have no exact table over a discrete caption alphabet")

    def gaussian_law(self, model: GaussianThetaModel) -> GaussianPromptLaw:
        if model.d != self.dim:
            raise DimensionMismatch(f"template dimension {self.dim}, model dimension {model.d}")
        chol = self.scale * np.eye(self.dim)
        components = tuple(Gaussian(mean=row.copy(), chol=chol) for row in self.offsets)
        prior = np.full(self.n_classes, 1.0 / self.n_classes)
        return GaussianPromptLaw(prior=prior, components=components)


@dataclass(frozen=True, eq=False)
class PosteriorMatchedStrategy:
    """Captions from ``caption_marginal``, labels from the source's true P(y | z)."""

    source: DiscreteTriple
    caption_marginal: NDArray[np.float64]
    kind: PromptKind = field(default=PromptKind.POSTERIOR_MATCHED, init=False)
    per_class: bool = field(default=False, init=False)

    def __post_init__(self) -> None:
        marginal = np.asarray(self.caption_marginal, dtype=np.float64)
        if marginal.shape != (self.source.z_size,):
            raise DimensionMismatch("caption marginal must live on the Z alphabet")
        p_z = self.source.p_z
        if np.any((marginal > POSITIVITY_TOL) & (p_z <= POSITIVITY_TOL)):
            raise ZeroConditioner("caption marginal charges a caption with P_Z = 0")
        object.__setattr__(self, "caption_marginal", marginal)

    @property
    def n_classes(self) -> int:
        return self.source.y_size

    def _table(self) -> NDArray[np.float64]:
        yz = self.source.yz_table().probs
        p_z = yz.sum(axis=0)
        post = np.where(p_z > POSITIVITY_TOL, yz / np.where(p_z > POSITIVITY_TOL, p_z, 1.0), 0.0)
        return np.asarray(post * self.caption_marginal)

    def draw(self, count: int, seed: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        probs = self._table()
        cells = make_rng(seed).choice(probs.size, size=count, p=probs.ravel() / probs.sum())
        ys, zs = np.divmod(cells, probs.shape[1])
        return ys.astype(np.int64), _one_hot(zs, probs.shape[1])

    def table(self, triple: DiscreteTriple) -> PromptTable:
        probs = self._table()
        return PromptTable(probs / probs.sum())

    def gaussian_law(self, model: GaussianThetaModel) -> GaussianPromptLaw:
        raise Unsupported("posterior-matched prompts are defined for discrete sources")


def tilted_class_conditional(triple: DiscreteTriple, tilt: float) -> ClassConditionalStrategy:
    """Class-conditional prompts with rho(z | y) proportional to P(z | y) exp(tilt * s_y(z)).

    The score s_y(z) = (2y/(|Y|-1) - 1)(2z/(|Z|-1) - 1) pushes captions of different
    labels toward opposite ends of the caption alphabet; tilt 0 recovers P(z | y).
    """
    yz = triple.yz_table().probs
    n_y, n_z = yz.shape
    p_y = yz.sum(axis=1)
    if np.any(p_y <= POSITIVITY_TOL):
        raise ZeroConditioner(f"P_Y vanishes at y={int(np.argmin(p_y))}")
    y_score = 2.0 * np.arange(n_y) / max(n_y - 1, 1) - 1.0
    z_score = 2.0 * np.arange(n_z) / max(n_z - 1, 1) - 1.0
    weighted = (yz / p_y[:, None]) * np.exp(tilt * np.outer(y_score, z_score))
    conditionals = weighted / weighted.sum(axis=1, keepdims=True)
    return ClassConditionalStrategy(source=triple, conditionals=conditionals)


def tilted_caption_marginal(p_z: ArrayLike, tilt: float) -> NDArray[np.float64]:
    """Exponential tilt of a caption marginal toward high caption indices."""
    base = np.asarray(p_z, dtype=np.float64)
    grid = np.linspace(-1.0, 1.0, base.shape[0]) if base.shape[0] > 1 else np.zeros(1)
    weighted = base * np.exp(tilt * grid)
    return np.asarray(weighted / weighted.sum())


@dataclass(frozen=True, eq=False)
class PromptSet:
    """Sampled prompts (y_k, z_k), uniformly weighted, with provenance."""

    ys: NDArray[np.int64]
    zs: NDArray[np.float64]
    kind: PromptKind
    count: int  # m per class for per-class strategies, otherwise M
    seed: int

    @property
    def size(self) -> int:
        return int(self.ys.shape[0])

    def for_class(self, y: int) -> NDArray[np.float64]:
        return self.zs[self.ys == y]

    def csv_header(self) -> list[str]:
        return ["y", *(f"z_{i}" for i in range(self.zs.shape[1])), "strategy", "seed"]

    def csv_rows(self) -> list[list[float | int | str]]:
        return [
            [int(self.ys[k]), *map(float, self.zs[k]), str(self.kind), self.seed]
            for k in range(self.size)
        ]


def generate(strategy: PromptStrategy, m_or_m_total: int, seed: int) -> PromptSet:
    """Draw a prompt set: ``m`` per class for per-class strategies, else ``M`` joint draws."""
    if m_or_m_total < 1:
        raise DomainError(f"prompt count must be at least 1, got {m_or_m_total}")
    ys, zs = strategy.draw(m_or_m_total, seed)
    logger.debug("Generated %d %s prompts (seed=%d)", ys.shape[0], strategy.kind, seed)
    return PromptSet(ys=ys, zs=zs, kind=strategy.kind, count=m_or_m_total, seed=seed)


@dataclass(frozen=True)
class PromptBias:
    """Prompt bias ||g_rho - g_{P_{Y,Z}}||^2 in L2(P_Z); ``stderr`` is 0 when exact."""

    value: float
    stderr: float = 0.0
    exact: bool = True


def _discrete_regression(
    table: NDArray[np.float64], r_vals: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    marginal = table.sum(axis=0)
    out = np.zeros(table.shape[1])
    live = marginal > POSITIVITY_TOL
    out[live] = (r_vals @ table[:, live]) / marginal[live]
    return out, live


def prompt_bias(
    strategy: PromptStrategy,
    target: Source,
    r: LabelFunction,
    n_mc: int | None = None,
    seed: int = 0,
) -> PromptBias:
    """Prompt bias of ``strategy`` against the evaluation law ``target``.

    Exact on discrete triples. On Gaussian models the L2(P_Z) norm is a Monte Carlo
    average over ``n_mc`` caption draws (``Settings.prompt_bias_mc_draws`` by default).

    Raises:
        Unsupported: if the strategy has no exact law of the target's kind.
        ZeroConditioner: if rho_Z vanishes on a caption that P_Z weights.
    """
    if isinstance(target, DiscreteTriple):
        r_vals = label_values(r, np.arange(target.y_size))
        rho = strategy.table(target).probs
        if rho.shape != (target.y_size, target.z_size):
            raise DimensionMismatch("prompt table does not match the triple's (y, z) alphabets")
        p_z = target.p_z
        g_rho, rho_live = _discrete_regression(rho, r_vals)
        g_true, _ = _discrete_regression(target.yz_table().probs, r_vals)
        starved = (p_z > POSITIVITY_TOL) & ~rho_live
        if np.any(starved):
            raise ZeroConditioner(f"rho_Z vanishes at weighted caption z={int(np.argmax(starved))}")
        return PromptBias(value=float(p_z @ (g_rho - g_true) ** 2))

    law = strategy.gaussian_law(target)
    if len(law.components) != 2:
        raise DimensionMismatch("Gaussian models have two classes")
    draws = get_settings().prompt_bias_mc_draws if n_mc is None else n_mc
    if draws < 2:
        raise DomainError(f"need at least 2 Monte Carlo draws, got {draws}")
    r_vals = label_values(r, np.arange(2))
    rng = make_rng(seed)
    labels = rng.random(draws) < target.p
    eps = rng.standard_normal((draws, target.d))
    z = np.where(
        labels[:, None],
        target.law(1).z_marginal.transform(eps),
        target.law(0).z_marginal.transform(eps),
    )
    sq = (law.regression(z, r_vals) - _true_gaussian_law(target).regression(z, r_vals)) ** 2
    return PromptBias(
        value=float(sq.mean()), stderr=float(sq.std(ddof=1) / math.sqrt(draws)), exact=False
    )


def chi2_caption_mismatch(rho_z: ArrayLike, q_z: ArrayLike) -> float:
    """D_chi2(rho_Z || Q_Z) = sum_z Q_Z(z) (rho_Z(z) / Q_Z(z) - 1)^2.

    Raises:
        NotAbsolutelyContinuous: if rho_Z charges a caption where Q_Z vanishes.
    """
    rho = np.asarray(rho_z, dtype=np.float64)
    q = np.asarray(q_z, dtype=np.float64)
    if rho.shape != q.shape or rho.ndim != 1:
        raise DimensionMismatch("caption marginals must be vectors over one alphabet")
    live = q > POSITIVITY_TOL
    if np.any((rho > POSITIVITY_TOL) & ~live):
        raise NotAbsolutelyContinuous("rho_Z charges a caption where Q_Z vanishes")
    return float(np.sum(q[live] * (rho[live] / q[live] - 1.0) ** 2))


def gaussian_chi2_caption_mismatch(
    strategy: PromptStrategy, model: GaussianThetaModel, n_mc: int, seed: int
) -> McEstimate:
    """Monte Carlo D_chi2(rho_Z || Q_Z) with z drawn from the model's caption marginal."""
    if n_mc < 2:
        raise DomainError(f"need at least 2 Monte Carlo draws, got {n_mc}")
    law = strategy.gaussian_law(model)
    rng = make_rng(seed)
    labels = rng.random(n_mc) < model.p
    eps = rng.standard_normal((n_mc, model.d))
    z = np.where(
        labels[:, None],
        model.law(1).z_marginal.transform(eps),
        model.law(0).z_marginal.transform(eps),
    )
    ratio = np.exp(law.log_caption_density(z) - _true_gaussian_law(model).log_caption_density(z))
    sq = (ratio - 1.0) ** 2
    return McEstimate(value=float(sq.mean()), stderr=float(sq.std(ddof=1) / math.sqrt(n_mc)))
