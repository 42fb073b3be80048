"""Conditional-mean route: spectral CME of Z given X composed with a ridge fit of g_rho.

The conditional mean embedding is kept as a weight functional,
F_hat(x) = sum_i w_i(x) psi(z_i) with w(x) = (1/N) V diag(f(mu)) V^T k_x, so the
predictor is eta_hat(x) = sum_i w_i(x) g_hat(z_i). Nothing vector-valued is ever
materialized.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from zeroshotlab.errors import DimensionMismatch, EmptySample, KernelMismatch
from zeroshotlab.kernels.core import (
    Eigendecomposition,
    Kernel,
    SpectralFilter,
    apply_filter,
    as_points,
    eigh_psd,
    gram,
)

logger = logging.getLogger(__name__)

LabelFunction = Callable[[NDArray[np.int64]], NDArray[np.float64]] | ArrayLike

RIDGE_RESIDUAL_TOL = 1e-8


def label_values(r: LabelFunction, ys: ArrayLike) -> NDArray[np.float64]:
    """Evaluate r on integer labels; ``r`` is a callable or a lookup vector over labels."""
    labels = np.asarray(ys, dtype=np.int64)
    if callable(r):
        return np.asarray(r(labels), dtype=np.float64).reshape(labels.shape)
    return np.asarray(r, dtype=np.float64)[labels]


def _pairs(xs: ArrayLike, zs: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x, z = as_points(xs), as_points(zs)
    if x.shape[0] == 0:
        raise EmptySample("no training pairs")
    if x.shape[0] != z.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} x-points but {z.shape[0]} z-points")
    return x, z


@dataclass(frozen=True, eq=False)
class CmeModel:
    """Fitted conditional mean embedding of Z given X."""

    xs: NDArray[np.float64]
    zs: NDArray[np.float64]
    kernel_x: Kernel
    eig: Eigendecomposition  # of K_X / N
    filt: SpectralFilter
    weight_map: NDArray[np.float64]  # (1/N) V diag(f(mu)) V^T
    kernel_z: Kernel | None = None

    @property
    def n(self) -> int:
        return int(self.xs.shape[0])

    def weights(self, x: ArrayLike) -> NDArray[np.float64]:
        """Weight vectors w(x), one row per query point."""
        q = as_points(x)
        if q.shape[1] != self.xs.shape[1]:
            raise DimensionMismatch(f"queries have dimension {q.shape[1]}, expected {self.xs.shape[1]}")
        k_q = self.kernel_x.evaluate(self.xs, q)
        return (self.weight_map @ k_q).T


def fit_cme(
    xs: ArrayLike,
    zs: ArrayLike,
    kernel_x: Kernel,
    filt: SpectralFilter,
    kernel_z: Kernel | None = None,
) -> CmeModel:
    """Fit the spectrally regularized conditional mean embedding.

    Args:
        xs: Training inputs, shape (N, d_x).
        zs: Paired captions, shape (N, d_z).
        kernel_x: Input kernel.
        filt: Spectral filter applied to the eigenvalues of K_X / N.
        kernel_z: Output feature kernel; recorded so that predictions can check it
            against the prompt regression.

    Returns:
        The fitted model.
    """
    x, z = _pairs(xs, zs)
    n = x.shape[0]
    eig = eigh_psd(gram(kernel_x, x).matrix / n)
    weight_map = apply_filter(eig, filt) / n
    logger.debug("CME fit: N=%d, filter=%s(%.3g), top eigenvalue %.4g", n, filt.kind, filt.lam, eig.values[0])
    return CmeModel(
        xs=x, zs=z, kernel_x=kernel_x, eig=eig, filt=filt, weight_map=weight_map, kernel_z=kernel_z
    )


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """Kernel ridge fit of the prompt regression g_rho."""

    zs: NDArray[np.float64]
    kernel_z: Kernel
    coef: NDArray[np.float64]
    lam: float

    def predict(self, z: ArrayLike) -> NDArray[np.float64]:
        q = as_points(z)
        return self.kernel_z.evaluate(q, self.zs) @ self.coef


def fit_g_rho(
    ys: ArrayLike, zs: ArrayLike, r: LabelFunction, kernel_z: Kernel, lam: float
) -> RidgeModel:
    """Solve (L + M lam I) c = (r(y_1), ..., r(y_M))."""
    z = as_points(zs)
    m = z.shape[0]
    if m == 0:
        raise EmptySample("no prompts")
    targets = label_values(r, ys)
    if targets.shape != (m,):
        raise DimensionMismatch(f"{targets.shape[0]} labels for {m} prompts")
    system = gram(kernel_z, z).matrix + m * lam * np.eye(m)
    coef = scipy.linalg.solve(system, targets, assume_a="pos")
    residual = float(np.linalg.norm(system @ coef - targets))
    if residual > RIDGE_RESIDUAL_TOL * max(float(np.linalg.norm(targets)), 1e-300):
        logger.warning("Ridge solve residual %.3g exceeds tolerance (lam=%.3g, M=%d)", residual, lam, m)
    return RidgeModel(zs=z, kernel_z=kernel_z, coef=coef, lam=lam)


def predict_eta(cme: CmeModel, ridge: RidgeModel, x: ArrayLike) -> NDArray[np.float64]:
    """eta_hat(x) = sum_i w_i(x) g_hat(z_i), one value per query row."""
    if cme.kernel_z is not None and cme.kernel_z != ridge.kernel_z:
        raise KernelMismatch("CME output kernel differs from the prompt regression kernel")
    return cme.weights(x) @ ridge.predict(cme.zs)


def lambda_schedule_cme(n: int, beta: float = 1.0, p: float = 0.5, scale: float = 1.0) -> float:
    """lam_N = scale * N^(-1 / (beta + p))."""
    return float(scale * n ** (-1.0 / (beta + p)))
