"""Zero-shot classification from per-class scores.

Class c is represented by the mean encoding of its prompts; an input is scored by a
(optionally sigma-weighted) inner product with every class embedding and decoded by
argmax. Ties go to the lowest class index.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from zeroshotlab.errors import DimensionMismatch, DomainError, MissingClass, ZeroMarginal
from zeroshotlab.oracle.discrete import BOUND_TOL, POSITIVITY_TOL, DiscreteTriple, SpectrumResult

logger = logging.getLogger(__name__)

Encoder = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class ClassEmbeddings:
    """One embedding row per class, with optional per-coordinate sigma weights."""

    vectors: NDArray[np.float64]
    sigma_weights: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if not np.all(np.isfinite(vectors)):
            raise DomainError("class embeddings must be finite")
        object.__setattr__(self, "vectors", vectors)
        if self.sigma_weights is not None:
            sigma = np.asarray(self.sigma_weights, dtype=np.float64)
            if sigma.shape != (vectors.shape[1],):
                raise DimensionMismatch("sigma weights need one entry per embedding coordinate")
            if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
                raise DomainError("sigma weights must be nonnegative and descending")
            object.__setattr__(self, "sigma_weights", sigma)

    @property
    def n_classes(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def class_embeddings(
    ys: ArrayLike,
    zs: ArrayLike,
    encoder: Encoder,
    n_classes: int | None = None,
    normalize: bool = False,
    sigma_weights: ArrayLike | None = None,
) -> ClassEmbeddings:
    """Mean encoded prompt per class.

    Args:
        ys: Prompt labels.
        zs: Prompt captions, one row per prompt.
        encoder: Caption encoder applied to all rows at once.
        n_classes: Number of classes; defaults to ``max(ys) + 1``.
        normalize: Project each class mean onto the unit sphere.
        sigma_weights: Optional weights for the rescaled inner product.

    Raises:
        MissingClass: if some class has no prompt.
    """
    labels = np.asarray(ys, dtype=np.int64)
    captions = np.asarray(zs, dtype=np.float64)
    if labels.shape[0] != captions.shape[0]:
        raise DimensionMismatch(f"{labels.shape[0]} labels for {captions.shape[0]} captions")
    if labels.size == 0:
        raise MissingClass("no prompts")
    count = int(labels.max()) + 1 if n_classes is None else n_classes
    encoded = np.asarray(encoder(captions), dtype=np.float64)
    if encoded.ndim != 2 or encoded.shape[0] != labels.shape[0]:
        raise DimensionMismatch(f"encoder returned shape {encoded.shape}")

    means = np.empty((count, encoded.shape[1]))
    for c in range(count):
        rows = encoded[labels == c]
        if rows.shape[0] == 0:
            raise MissingClass(f"class {c} has no prompts")
        means[c] = rows.mean(axis=0)
    if normalize:
        norms = np.linalg.norm(means, axis=1, keepdims=True)
        means = means / np.where(norms > 0, norms, 1.0)
    weights = None if sigma_weights is None else np.asarray(sigma_weights, dtype=np.float64)
    return ClassEmbeddings(vectors=means, sigma_weights=weights)


def scores(x_encoding: ArrayLike, embeddings: ClassEmbeddings) -> NDArray[np.float64]:
    """Per-class scores, shape (C,) for one encoding or (n, C) for a batch."""
    enc = np.asarray(x_encoding, dtype=np.float64)
    if enc.shape[-1] != embeddings.dim:
        raise DimensionMismatch(f"encoding has dimension {enc.shape[-1]}, expected {embeddings.dim}")
    if embeddings.sigma_weights is not None:
        enc = enc * embeddings.sigma_weights
    return np.asarray(enc @ embeddings.vectors.T)


def decode(score_vectors: ArrayLike) -> NDArray[np.int64]:
    """Argmax over the last axis; ``np.argmax`` returns the first maximum, so ties go low."""
    return np.asarray(np.argmax(np.asarray(score_vectors, dtype=np.float64), axis=-1), dtype=np.int64)


def score_and_decode(
    x_encoding: ArrayLike, embeddings: ClassEmbeddings
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Scores and decoded classes for one encoding (d,) or a batch (n, d)."""
    s = scores(x_encoding, embeddings)
    return s, decode(s)


def spectral_encoders(spectrum: SpectrumResult) -> tuple[Encoder, Encoder, NDArray[np.float64]]:
    """Encoders x -> alpha(x), z -> beta(z) on one-hot inputs, with the singular values.

    Paired with sigma weights, class means of beta over prompts drawn with rho_Z = Q_Z
    give scores proportional to the indirect predictor of each class.
    """
    left, right = spectrum.left_functions, spectrum.right_functions

    def encode_x(xs: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(np.asarray(xs, dtype=np.float64) @ left)

    def encode_z(zs: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(np.asarray(zs, dtype=np.float64) @ right)

    return encode_x, encode_z, spectrum.singular_values.copy()


@dataclass(frozen=True)
class ExcessRiskCheck:
    """Excess 0-1 risk of a decoded score function against the summed-MSE bound."""

    risk: float
    bayes_risk: float
    lhs: float  # risk - bayes_risk
    rhs: float  # 2 sqrt(sum_c ||eta_hat_c - eta_*_c||^2)
    ok: bool


def class_posteriors(triple: DiscreteTriple) -> NDArray[np.float64]:
    """eta_*^(c)(x) = P(Y=c | X=x), shape (|X|, |Y|)."""
    p_x = triple.p_x
    if np.any(p_x <= POSITIVITY_TOL):
        raise ZeroMarginal(f"P_X vanishes at x={int(np.argmin(p_x))}")
    return np.asarray(triple.p_xy / p_x[:, None])


def excess_risk_check(
    score_fn: ArrayLike | Callable[[NDArray[np.int64]], NDArray[np.float64]],
    triple: DiscreteTriple,
) -> ExcessRiskCheck:
    """Exact excess risk of argmax decoding and its regression bound.

    ``score_fn`` is either an |X| x |Y| score table or a callable mapping X indices to
    score rows.
    """
    posterior = class_posteriors(triple)
    if callable(score_fn):
        table = np.asarray(score_fn(np.arange(triple.x_size)), dtype=np.float64)
    else:
        table = np.asarray(score_fn, dtype=np.float64)
    if table.shape != posterior.shape:
        raise DimensionMismatch(f"scores have shape {table.shape}, expected {posterior.shape}")

    p_x = triple.p_x
    decoded = decode(table)
    risk = float(p_x @ (1.0 - posterior[np.arange(triple.x_size), decoded]))
    bayes = float(p_x @ (1.0 - posterior.max(axis=1)))
    lhs = risk - bayes
    rhs = 2.0 * float(np.sqrt(p_x @ ((table - posterior) ** 2).sum(axis=1)))
    return ExcessRiskCheck(risk=risk, bayes_risk=bayes, lhs=lhs, rhs=rhs, ok=lhs <= rhs + BOUND_TOL)


def predictions_csv(
    score_rows: ArrayLike, labels: ArrayLike, k: int
) -> tuple[list[str], list[list[float | int]]]:
    """Header and rows ``example_id, true_label, top1..topk, score_0..score_{C-1}``."""
    s = np.atleast_2d(np.asarray(score_rows, dtype=np.float64))
    truth = np.asarray(labels, dtype=np.int64)
    n_classes = s.shape[1]
    if not 1 <= k <= n_classes:
        raise DomainError(f"k must lie in 1..{n_classes}, got {k}")
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    header = [
        "example_id",
        "true_label",
        *(f"top{j + 1}" for j in range(k)),
        *(f"score_{c}" for c in range(n_classes)),
    ]
    rows: list[list[float | int]] = [
        [i, int(truth[i]), *map(int, order[i]), *map(float, s[i])] for i in range(s.shape[0])
    ]
    return header, rows
