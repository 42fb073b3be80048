"""Sample-based dependence: NOCCO mean square contingency, kernel CCA, decay fits, rates."""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from zeroshotlab.errors import (
    DimensionMismatch,
    DomainError,
    EmptySample,
    RankDeficient,
    TooFewSamples,
    TooFewValues,
)
from zeroshotlab.kernels.core import Eigendecomposition, Kernel, as_points, center, eigh_psd, gram

logger = logging.getLogger(__name__)

CORRELATION_SLACK = 1e-6


def _sample(xs: ArrayLike, zs: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x, z = as_points(xs), as_points(zs)
    if x.shape[0] == 0:
        raise EmptySample("no pairs")
    if x.shape[0] != z.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} x-points but {z.shape[0]} z-points")
    if x.shape[0] < 4:
        raise TooFewSamples(f"need at least 4 pairs, got {x.shape[0]}")
    return x, z


def _centered_eig(kernel: Kernel, pts: NDArray[np.float64]) -> Eigendecomposition:
    return eigh_psd(center(gram(kernel, pts)).matrix)


def msc_estimate(
    xs: ArrayLike, zs: ArrayLike, kernel_x: Kernel, kernel_z: Kernel, lam: float
) -> float:
    """NOCCO statistic Tr(R_X R_Z) with R = K~ (K~ + n lam I)^{-1} on centered Grams."""
    x, z = _sample(xs, zs)
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    n = x.shape[0]
    ex, ez = _centered_eig(kernel_x, x), _centered_eig(kernel_z, z)
    shrink_x = ex.values / (ex.values + n * lam)
    shrink_z = ez.values / (ez.values + n * lam)
    overlap = ex.vectors.T @ ez.vectors
    return float(np.sum(shrink_x[:, None] * shrink_z[None, :] * overlap**2))


@dataclass(frozen=True, eq=False)
class _ViewStats:
    """Training points and Gram moments needed to center new kernel columns."""

    pts: NDArray[np.float64]
    kernel: Kernel
    col_means: NDArray[np.float64]
    grand_mean: float

    def centered_columns(self, new: ArrayLike) -> NDArray[np.float64]:
        k = self.kernel.evaluate(self.pts, as_points(new))
        return k - k.mean(axis=0, keepdims=True) - self.col_means[:, None] + self.grand_mean


@dataclass(frozen=True, eq=False)
class CcaResult:
    """Regularized kernel CCA: canonical correlations and dual coefficients.

    Variates on the training sample are ``K~_X @ alpha`` and ``K~_Z @ beta``; they are
    centered with unit empirical variance.
    """

    correlations: NDArray[np.float64]
    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    lam: float
    x_view: _ViewStats
    z_view: _ViewStats

    def transform_x(self, xs: ArrayLike) -> NDArray[np.float64]:
        return self.x_view.centered_columns(xs).T @ self.alpha

    def transform_z(self, zs: ArrayLike) -> NDArray[np.float64]:
        return self.z_view.centered_columns(zs).T @ self.beta


def _view(kernel: Kernel, pts: NDArray[np.float64]) -> tuple[_ViewStats, Eigendecomposition]:
    raw = gram(kernel, pts)
    stats = _ViewStats(
        pts=pts,
        kernel=kernel,
        col_means=raw.matrix.mean(axis=0),
        grand_mean=float(raw.matrix.mean()),
    )
    return stats, eigh_psd(center(raw).matrix)


def _duals(
    eig: Eigendecomposition, directions: NDArray[np.float64], n: int, lam: float
) -> NDArray[np.float64]:
    """Dual coefficients whose variates K~ alpha have unit empirical variance."""
    a = eig.values
    inv = 1.0 / np.sqrt(a * (a + n * lam))
    alpha = eig.vectors @ (inv[:, None] * directions)
    variates = eig.vectors @ (np.sqrt(a / (a + n * lam))[:, None] * directions)
    scale = np.sqrt(np.mean(variates**2, axis=0))
    if np.any(scale <= 0):
        raise RankDeficient("a canonical direction has zero empirical variance")
    return np.asarray(alpha / scale)


def empirical_cca(
    xs: ArrayLike,
    zs: ArrayLike,
    kernel_x: Kernel,
    kernel_z: Kernel,
    lam: float,
    d: int,
) -> CcaResult:
    """Top-``d`` singular structure of R_X^{1/2} R_Z^{1/2}, R = K~ (K~ + n lam I)^{-1}.

    The singular values are the regularized canonical correlations. Centering removes
    the constant pair, so the leading correlation is the first nontrivial one.

    Raises:
        RankDeficient: if either centered Gram has fewer than ``d`` positive directions.
    """
    x, z = _sample(xs, zs)
    n = x.shape[0]
    if not 1 <= d <= n:
        raise DomainError(f"d must lie in 1..{n}, got {d}")
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    x_view, ex = _view(kernel_x, x)
    z_view, ez = _view(kernel_z, z)

    keep_x, keep_z = ex.values > 0, ez.values > 0
    rank = min(int(keep_x.sum()), int(keep_z.sum()))
    if rank < d:
        raise RankDeficient(f"only {rank} positive directions, {d} requested")
    ex = Eigendecomposition(ex.values[keep_x], ex.vectors[:, keep_x])
    ez = Eigendecomposition(ez.values[keep_z], ez.vectors[:, keep_z])

    root_x = np.sqrt(ex.values / (ex.values + n * lam))
    root_z = np.sqrt(ez.values / (ez.values + n * lam))
    core = root_x[:, None] * (ex.vectors.T @ ez.vectors) * root_z[None, :]
    left, sing, right_t = scipy.linalg.svd(core, full_matrices=False)
    if sing[0] > 1.0 + CORRELATION_SLACK:
        logger.warning("Leading canonical correlation %.8f exceeds 1", sing[0])

    alpha = _duals(ex, left[:, :d], n, lam)
    beta = _duals(ez, right_t[:d].T, n, lam)
    return CcaResult(
        correlations=np.clip(sing[:d], 0.0, 1.0),
        alpha=alpha,
        beta=beta,
        lam=lam,
        x_view=x_view,
        z_view=z_view,
    )


@dataclass(frozen=True)
class DecayFit:
    """Power-law fit sigma_i ~ i^-gamma with the MSC-implied exponent for comparison."""

    gamma: float
    msc: float
    msc_implied_gamma: float
    n_used: int


def singular_decay_fit(sigmas: ArrayLike) -> DecayFit:
    """Negated least-squares slope of log sigma_i against log i, over positive entries."""
    s = np.asarray(sigmas, dtype=np.float64).ravel()
    if s.size < 3:
        raise TooFewValues(f"need at least 3 singular values, got {s.size}")
    idx = np.arange(1, s.size + 1, dtype=np.float64)
    pos = s > 0
    if int(pos.sum()) < 2:
        raise TooFewValues("need at least 2 positive singular values")
    slope = np.polyfit(np.log(idx[pos]), np.log(s[pos]), 1)[0]
    info = float(np.sum(s[1:] ** 2))
    implied = (info + 1.0) / (2.0 * info) if info > 0 else math.inf
    return DecayFit(gamma=float(-slope), msc=info, msc_implied_gamma=implied, n_used=int(pos.sum()))


@dataclass(frozen=True)
class RateReport:
    """Predicted error exponents of the two estimation routes."""

    gamma_x: float
    gamma_z: float
    gamma_xz: float
    t: float
    omega_rho: float
    beta: float
    q: float
    conditional_mean_exponent: float  # q / (q + 1)
    prompt_exponent: float  # (2 omega - 1) / (2 omega + 1)
    info_density_exponent: float  # beta / (beta + 1)
    misspecified: bool | None = None


def rate_predictor(
    gamma_x: float,
    gamma_z: float,
    gamma_xz: float,
    t: float,
    omega_rho: float,
    beta: float,
    alpha: float | None = None,
) -> RateReport:
    """Aggregate exponent q(t) = (2 gamma_XZ + gamma_Z - 1)^t gamma_X^(1-t) and the route rates.

    With ``alpha`` given, also flags the sufficient condition for a mis-specified
    target, 2 gamma_XZ + gamma_Z <= alpha gamma_X.
    """
    if not 0.0 <= t < 1.0:
        raise DomainError(f"t must lie in [0, 1), got {t!r}")
    if omega_rho <= 0.5:
        raise DomainError(f"omega_rho must exceed 1/2, got {omega_rho!r}")
    if beta < 1.0:
        raise DomainError(f"beta must be at least 1, got {beta!r}")
    for name, value in (("gamma_x", gamma_x), ("gamma_z", gamma_z), ("gamma_xz", gamma_xz)):
        if value <= 0.5:
            raise DomainError(f"{name} must exceed 1/2, got {value!r}")
    q = (2.0 * gamma_xz + gamma_z - 1.0) ** t * gamma_x ** (1.0 - t)
    misspecified = None if alpha is None else bool(2.0 * gamma_xz + gamma_z <= alpha * gamma_x)
    return RateReport(
        gamma_x=gamma_x,
        gamma_z=gamma_z,
        gamma_xz=gamma_xz,
        t=t,
        omega_rho=omega_rho,
        beta=beta,
        q=q,
        conditional_mean_exponent=q / (q + 1.0),
        prompt_exponent=(2.0 * omega_rho - 1.0) / (2.0 * omega_rho + 1.0),
        info_density_exponent=beta / (beta + 1.0),
        misspecified=misspecified,
    )
