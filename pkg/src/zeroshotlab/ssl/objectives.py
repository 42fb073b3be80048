"""Self-supervised objectives on embedding batches and their covariance rewrites.

Every loss accepts arrays of shape (..., n, d): leading axes index independent
batches, so a stack of perturbed encoders is scored in a single call. Scalars come
back as ``float``; stacked inputs return one value per batch.

Covariances use the centering projector J = I - 11^T/n and 1/n normalization:
Sigma_AB = (JA)^T (JB) / n.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from zeroshotlab.errors import DimensionMismatch, DomainError, TooFewSamples, WhiteningFailure

logger = logging.getLogger(__name__)

Value = float | NDArray[np.float64]

WHITEN_WARN_REL = 1e-8
WHITEN_FAIL_REL = 1e-12
WHITEN_JITTER_REL = 1e-8


def _out(values: NDArray[np.float64]) -> Value:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    """Paired encodings: rows of ``a`` encode x_i, rows of ``b`` encode z_i."""

    a: NDArray[np.float64]
    b: NDArray[np.float64]

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim < 2 or a.shape != b.shape:
            raise DimensionMismatch(f"embedding shapes {a.shape} and {b.shape} must match as (..., n, d)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def of(cls, a: ArrayLike, b: ArrayLike) -> "EmbeddingBatch":
        return cls(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))

    @property
    def n(self) -> int:
        return int(self.a.shape[-2])

    @property
    def d(self) -> int:
        return int(self.a.shape[-1])

    def scaled(self, eps: float) -> "EmbeddingBatch":
        return EmbeddingBatch(eps * self.a, eps * self.b)


def _transpose(m: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.swapaxes(m, -1, -2)


@dataclass(frozen=True, eq=False)
class CovStats:
    """Centered (co)variances of a batch and its means."""

    mean_a: NDArray[np.float64]
    mean_b: NDArray[np.float64]
    sigma_aa: NDArray[np.float64]
    sigma_bb: NDArray[np.float64]
    sigma_ab: NDArray[np.float64]

    @property
    def sigma_ab_offdiag(self) -> NDArray[np.float64]:
        """Sigma_AB with its diagonal zeroed."""
        return self.sigma_ab * (1.0 - np.eye(self.sigma_ab.shape[-1]))


def cov_stats(batch: EmbeddingBatch) -> CovStats:
    if batch.n < 2:
        raise TooFewSamples(f"centered statistics need n >= 2, got {batch.n}")
    mean_a = batch.a.mean(axis=-2)
    mean_b = batch.b.mean(axis=-2)
    ca = batch.a - mean_a[..., None, :]
    cb = batch.b - mean_b[..., None, :]
    n = batch.n
    return CovStats(
        mean_a=mean_a,
        mean_b=mean_b,
        sigma_aa=_transpose(ca) @ ca / n,
        sigma_bb=_transpose(cb) @ cb / n,
        sigma_ab=_transpose(ca) @ cb / n,
    )


def _similarities(batch: EmbeddingBatch) -> NDArray[np.float64]:
    return batch.a @ _transpose(batch.b)


def _trace(m: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.asarray(np.trace(m, axis1=-2, axis2=-1))


# CLIP


def clip_loss(batch: EmbeddingBatch, offset: float = 0.0, log_n: bool = False) -> Value:
    """Symmetric InfoNCE.

    (1/n) sum_i [-<a_i, b_i> + 1/2 log sum_j e^<a_i, b_j> + 1/2 log sum_j e^<a_j, b_i>]
    plus ``offset``, plus log n when ``log_n`` is set.
    """
    if batch.n < 1:
        raise TooFewSamples("empty batch")
    s = _similarities(batch)
    align = np.diagonal(s, axis1=-2, axis2=-1).mean(axis=-1)
    rows = logsumexp(s, axis=-1).mean(axis=-1)
    cols = logsumexp(s, axis=-2).mean(axis=-1)
    constant = offset + (math.log(batch.n) if log_n else 0.0)
    return _out(-align + 0.5 * rows + 0.5 * cols + constant)


def clip_quadratic_form(batch: EmbeddingBatch) -> Value:
    """Second-order expansion of the CLIP loss around zero similarities, without its constant.

    -Tr Sigma_AB + 1/4 mean_i Var_j <a_i, b_j> + 1/4 mean_j Var_i <a_i, b_j>
    """
    stats = cov_stats(batch)
    s = _similarities(batch)
    row_var = s.var(axis=-1).mean(axis=-1)
    col_var = s.var(axis=-2).mean(axis=-1)
    return _out(-_trace(stats.sigma_ab) + 0.25 * row_var + 0.25 * col_var)


def clip_taylor_gap(
    batch: EmbeddingBatch,
    eps: float = 1.0,
    offset: float = 0.0,
    log_n: bool = False,
    include_constant: bool = True,
) -> Value:
    """|clip_loss(eps * batch) - quadratic form(eps * batch)|.

    With ``include_constant`` the zeroth-order term log n + offset (+ log n under
    ``log_n``) is subtracted first, so the gap decays with eps. Without it the gap at
    zero embeddings is that constant.
    """
    scaled = batch.scaled(eps)
    loss = np.asarray(clip_loss(scaled, offset=offset, log_n=log_n))
    quad = np.asarray(clip_quadratic_form(scaled))
    constant = 0.0
    if include_constant:
        constant = math.log(batch.n) * (2.0 if log_n else 1.0) + offset
    return _out(np.abs(loss - constant - quad))


# Spectral contrastive


def spectral_contrastive_loss(batch: EmbeddingBatch) -> Value:
    """-(1/n) sum_i <a_i, b_i> + (1/(n(n-1))) sum_{i != j} <a_i, b_j>^2, via the Gram AB^T."""
    n = batch.n
    if n < 2:
        raise TooFewSamples(f"spectral contrastive loss needs n >= 2, got {n}")
    s = _similarities(batch)
    diag = np.diagonal(s, axis1=-2, axis2=-1)
    off = (np.sum(s**2, axis=(-2, -1)) - np.sum(diag**2, axis=-1)) / (n * (n - 1))
    return _out(-diag.mean(axis=-1) + off)


def spectral_contrastive_loss_loop(a: ArrayLike, b: ArrayLike) -> float:
    """Double-loop evaluation of the spectral contrastive loss on a single batch."""
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    n = a_arr.shape[0]
    if n < 2:
        raise TooFewSamples(f"spectral contrastive loss needs n >= 2, got {n}")
    align = 0.0
    cross = 0.0
    for i in range(n):
        align += float(a_arr[i] @ b_arr[i])
        for j in range(n):
            if i != j:
                cross += float(a_arr[i] @ b_arr[j]) ** 2
    return -align / n + cross / (n * (n - 1))


@dataclass(frozen=True)
class RewriteDiagnostic:
    """Pair-sum cross term of the spectral contrastive loss against its covariance rewrite."""

    pair_sum: float  # (1/(n(n-1))) sum_{i != j} <a_i, b_j>^2
    covariance_term: float  # ||offdiag Sigma_AB||_F^2
    discrepancy: float


def spectral_contrastive_rewrite(batch: EmbeddingBatch) -> RewriteDiagnostic:
    """Compare the n x n pair sum with the d x d off-diagonal covariance norm it is equated to."""
    if batch.a.ndim != 2:
        raise DimensionMismatch("the rewrite diagnostic takes a single (n, d) batch")
    n = batch.n
    s = _similarities(batch)
    pair_sum = float((np.sum(s**2) - np.sum(np.diag(s) ** 2)) / (n * (n - 1)))
    cov_term = float(np.sum(cov_stats(batch).sigma_ab_offdiag ** 2))
    return RewriteDiagnostic(pair_sum=pair_sum, covariance_term=cov_term, discrepancy=abs(pair_sum - cov_term))


# VICReg


@dataclass(frozen=True)
class VicregParams:
    """Hinge target c1, hinge smoothing c2, variance weight c3, covariance weight kappa."""

    c1: float = 1.0
    c2: float = 1e-4
    c3: float = 25.0
    kappa: float = 1.0
    invariance_weight: float = 25.0

    def __post_init__(self) -> None:
        if min(self.c1, self.c2, self.c3, self.kappa, self.invariance_weight) <= 0:
            raise DomainError("VICReg hyperparameters must be positive")


@dataclass(frozen=True, eq=False)
class VicregResult:
    """Total loss and its variance / invariance / covariance parts."""

    total: Value
    variance: Value
    invariance: Value
    covariance: Value


def vicreg_loss(batch: EmbeddingBatch, params: VicregParams | None = None) -> VicregResult:
    """Variance hinge, invariance and off-diagonal covariance terms.

    variance = c3/(2d) [sum r(diag Sigma_AA) + sum r(diag Sigma_BB)], r(x) = max(0, c1 - sqrt(x + c2))
    invariance = (1/2n) ||A - B||_F^2
    covariance = kappa ||offdiag Sigma_AB||_F^2
    total = variance + invariance_weight * invariance + covariance
    """
    p = params or VicregParams()
    stats = cov_stats(batch)

    def hinge(sigma: NDArray[np.float64]) -> NDArray[np.float64]:
        diag = np.diagonal(sigma, axis1=-2, axis2=-1)
        return np.maximum(0.0, p.c1 - np.sqrt(diag + p.c2)).sum(axis=-1)

    variance = p.c3 / (2.0 * batch.d) * (hinge(stats.sigma_aa) + hinge(stats.sigma_bb))
    invariance = np.sum((batch.a - batch.b) ** 2, axis=(-2, -1)) / (2.0 * batch.n)
    covariance = p.kappa * np.sum(stats.sigma_ab_offdiag**2, axis=(-2, -1))
    total = variance + p.invariance_weight * invariance + covariance
    return VicregResult(
        total=_out(total),
        variance=_out(variance),
        invariance=_out(invariance),
        covariance=_out(covariance),
    )


def vicreg_identity_gap(batch: EmbeddingBatch) -> Value:
    """|(1/2n)||A-B||^2 - [1/2 (Tr Sigma_AA + Tr Sigma_BB - 2 Tr Sigma_AB) + 1/2 ||mean_a - mean_b||^2]|."""
    stats = cov_stats(batch)
    lhs = np.sum((batch.a - batch.b) ** 2, axis=(-2, -1)) / (2.0 * batch.n)
    traces = _trace(stats.sigma_aa) + _trace(stats.sigma_bb) - 2.0 * _trace(stats.sigma_ab)
    rhs = 0.5 * traces + 0.5 * np.sum((stats.mean_a - stats.mean_b) ** 2, axis=-1)
    return _out(np.abs(lhs - rhs))


# Barlow Twins


def _whiten(centered: NDArray[np.float64], sigma: NDArray[np.float64]) -> NDArray[np.float64]:
    """ZCA-whiten centered rows so that their covariance is the identity."""
    values, vectors = np.linalg.eigh(sigma)
    top = values[..., -1:]
    low = values[..., :1]
    if np.any(top <= 0) or np.any(low <= WHITEN_FAIL_REL * top):
        raise WhiteningFailure("centered covariance is singular; whitening needs n > d and full rank")
    if np.any(low <= WHITEN_WARN_REL * top):
        jitter = WHITEN_JITTER_REL * values.mean(axis=-1, keepdims=True)
        logger.warning("Whitening a near-singular covariance; adding jitter %.3g", float(np.max(jitter)))
        values = values + jitter
    inv_root = (vectors * values[..., None, :] ** -0.5) @ _transpose(vectors)
    return centered @ inv_root


def barlow_twins_loss(batch: EmbeddingBatch, kappa: float = 1.0, align: bool = True) -> Value:
    """1/2 sum_i (C_ii - 1)^2 + kappa ||offdiag C||_F^2 on whitened embeddings.

    Both sides are whitened so their centered covariances are the identity. With
    ``align`` both whitened sides are then rotated into the canonical-correlation basis,
    making C diagonal with the canonical correlations on its diagonal; the loss is then
    invariant to invertible linear maps of either side. Without it, ZCA whitening is
    used as is.

    Raises:
        WhiteningFailure: if a centered covariance is singular.
    """
    if kappa < 0:
        raise DomainError(f"kappa must be nonnegative, got {kappa!r}")
    stats = cov_stats(batch)
    wa = _whiten(batch.a - stats.mean_a[..., None, :], stats.sigma_aa)
    wb = _whiten(batch.b - stats.mean_b[..., None, :], stats.sigma_bb)
    cross = _transpose(wa) @ wb / batch.n
    if align:
        left, _, right_t = np.linalg.svd(cross)
        cross = _transpose(left) @ cross @ _transpose(right_t)
    diag = np.diagonal(cross, axis1=-2, axis2=-1)
    off = cross * (1.0 - np.eye(batch.d))
    return _out(0.5 * np.sum((diag - 1.0) ** 2, axis=-1) + kappa * np.sum(off**2, axis=(-2, -1)))
