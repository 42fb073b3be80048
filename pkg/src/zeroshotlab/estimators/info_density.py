"""Information-density route.

R_hat = f(C_u) C_p 1 estimates the Radon-Nikodym derivative of the paired law against
the product of marginals, using a paired half of the sample and an unpaired half whose
captions are cyclically shifted. The indirect predictor is then the prompt average
eta_hat(x) = sum_k w_k r(y_k) R_hat(x, z_k).
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray

from zeroshotlab.errors import DimensionMismatch, DomainError, EmptySample, TooFewSamples
from zeroshotlab.estimators.conditional_mean import LabelFunction, label_values
from zeroshotlab.kernels.core import ProductKernel, SpectralFilter, as_points, eigh_psd, gram
from zeroshotlab.rng import make_rng

if TYPE_CHECKING:
    from zeroshotlab.prompting.strategies import PromptSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PairSplit:
    """Paired half and synthesized unpaired half of a pre-training sample."""

    paired_x: NDArray[np.float64]
    paired_z: NDArray[np.float64]
    unpaired_x: NDArray[np.float64]
    unpaired_z: NDArray[np.float64]

    @property
    def n_paired(self) -> int:
        return int(self.paired_x.shape[0])

    @property
    def n_unpaired(self) -> int:
        return int(self.unpaired_x.shape[0])


def split_pairs(xs: ArrayLike, zs: ArrayLike, seed: int) -> PairSplit:
    """Shuffle, keep the first ceil(N/2) pairs, and unpair the rest by shifting captions."""
    x, z = as_points(xs), as_points(zs)
    if x.shape[0] != z.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} x-points but {z.shape[0]} z-points")
    n = x.shape[0]
    if n < 4:
        raise TooFewSamples(f"need at least 4 pairs to split, got {n}")
    perm = make_rng(seed).permutation(n)
    x, z = x[perm], z[perm]
    n_p = math.ceil(n / 2)
    return PairSplit(
        paired_x=x[:n_p],
        paired_z=z[:n_p],
        unpaired_x=x[n_p:],
        unpaired_z=np.roll(z[n_p:], 1, axis=0),
    )


@dataclass(frozen=True, eq=False)
class RnModel:
    """Fitted density-ratio expansion over the unpaired points."""

    unpaired_x: NDArray[np.float64]
    unpaired_z: NDArray[np.float64]
    kernel: ProductKernel
    coef: NDArray[np.float64]
    lam: float
    clamp_nonnegative: bool = False

    def _finish(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.maximum(values, 0.0) if self.clamp_nonnegative else values

    def evaluate(self, xs: ArrayLike, zs: ArrayLike) -> NDArray[np.float64]:
        """R_hat at the pairs (x_i, z_i)."""
        x, z = as_points(xs), as_points(zs)
        k_x = self.kernel.x_kernel.evaluate(self.unpaired_x, x)
        k_z = self.kernel.z_kernel.evaluate(self.unpaired_z, z)
        return self._finish(self.coef @ (k_x * k_z))

    def evaluate_grid(self, xs: ArrayLike, zs: ArrayLike) -> NDArray[np.float64]:
        """R_hat(x_i, z_k) on the product grid, shape (n_x, n_z)."""
        k_x = self.kernel.x_kernel.evaluate(self.unpaired_x, as_points(xs))
        k_z = self.kernel.z_kernel.evaluate(self.unpaired_z, as_points(zs))
        return self._finish((k_x * self.coef[:, None]).T @ k_z)


def fit_rn(
    split: PairSplit,
    kernel: ProductKernel,
    filt: SpectralFilter,
    clamp_nonnegative: bool = False,
) -> RnModel:
    """c = (1 / (N_u N_p)) V diag(f(mu)/mu) V^T K_up 1, with K_u / N_u = V diag(mu) V^T."""
    n_u, n_p = split.n_unpaired, split.n_paired
    if n_u == 0 or n_p == 0:
        raise EmptySample("both halves of the split must be nonempty")
    if split.paired_x.shape[1] != kernel.x_dim:
        raise DimensionMismatch(f"kernel expects x of dimension {kernel.x_dim}")
    unpaired = np.hstack([split.unpaired_x, split.unpaired_z])
    paired = np.hstack([split.paired_x, split.paired_z])

    eig = eigh_psd(gram(kernel, unpaired).matrix / n_u)
    mean_embedding = kernel.evaluate(unpaired, paired).sum(axis=1)
    v = eig.vectors
    coef = (v * filt.ratio(eig.values)) @ (v.T @ mean_embedding) / (n_u * n_p)
    if not np.all(np.isfinite(coef)):
        raise DomainError("density-ratio coefficients are not finite")
    logger.debug("RN fit: N_p=%d, N_u=%d, filter=%s(%.3g)", n_p, n_u, filt.kind, filt.lam)
    return RnModel(
        unpaired_x=split.unpaired_x,
        unpaired_z=split.unpaired_z,
        kernel=kernel,
        coef=coef,
        lam=filt.lam,
        clamp_nonnegative=clamp_nonnegative,
    )


@dataclass(frozen=True, eq=False)
class PromptMeasure:
    """Weighted prompts (y_k, z_k); uniform 1/M unless weights are given."""

    ys: NDArray[np.int64]
    zs: NDArray[np.float64]
    weights: NDArray[np.float64]

    @classmethod
    def uniform(cls, ys: ArrayLike, zs: ArrayLike) -> "PromptMeasure":
        labels = np.asarray(ys, dtype=np.int64)
        return cls.weighted(labels, zs, np.full(labels.shape[0], 1.0 / max(labels.shape[0], 1)))

    @classmethod
    def from_prompt_set(cls, prompts: "PromptSet") -> "PromptMeasure":
        return cls.uniform(prompts.ys, prompts.zs)

    @classmethod
    def weighted(cls, ys: ArrayLike, zs: ArrayLike, weights: ArrayLike) -> "PromptMeasure":
        labels = np.asarray(ys, dtype=np.int64)
        z = as_points(zs)
        w = np.asarray(weights, dtype=np.float64)
        if labels.shape[0] == 0:
            raise EmptySample("prompt measure needs at least one prompt")
        if not (labels.shape[0] == z.shape[0] == w.shape[0]):
            raise DimensionMismatch("labels, captions and weights must have equal length")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise DomainError("prompt weights must be nonnegative and sum to 1")
        return cls(ys=labels, zs=z, weights=w)

    @property
    def size(self) -> int:
        return int(self.ys.shape[0])


def predict_eta(
    rn: RnModel, prompts: PromptMeasure, r: LabelFunction, x: ArrayLike
) -> NDArray[np.float64]:
    """eta_hat(x) = sum_k w_k r(y_k) R_hat(x, z_k), one value per query row."""
    return rn.evaluate_grid(x, prompts.zs) @ (prompts.weights * label_values(r, prompts.ys))


def lambda_schedule_rn(
    n_p: float, n_u: float, beta: float, k_max: float = 1.0, scale: float = 1.0
) -> float:
    """((N_p^-1/2 + N_u^-1/2) / K_max^1/2)^(1 / (beta + 1)), times ``scale``."""
    if beta < 1:
        raise DomainError(f"beta must be at least 1, got {beta!r}")
    base = (n_p**-0.5 + n_u**-0.5) / math.sqrt(k_max)
    return float(scale * base ** (1.0 / (beta + 1.0)))
