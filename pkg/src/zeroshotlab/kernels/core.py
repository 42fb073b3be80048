"""Kernels, Gram matrices, PSD eigendecompositions and spectral filters."""

import logging
from dataclasses import dataclass
from typing import Literal, Protocol, runtime_checkable

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist, pdist

from zeroshotlab.errors import (
    DegenerateData,
    DimensionMismatch,
    DomainError,
    NotSymmetric,
    TooFewSamples,
)

logger = logging.getLogger(__name__)

EIG_CLAMP_REL = 1e-12
SYMMETRY_TOL = 1e-12


def as_points(pts: ArrayLike) -> NDArray[np.float64]:
    """Coerce to an (n, d) float array; 1-D input is read as n scalars."""
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"points must be an (n, d) array, got shape {arr.shape}")
    return arr


@runtime_checkable
class Kernel(Protocol):
    """A bounded positive-definite kernel on rows of a point array."""

    @property
    def k_max(self) -> float: ...

    def evaluate(self, a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]: ...


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian RBF kernel k(u, v) = exp(-||u - v||^2 / (2 h^2))."""

    bandwidth: float
    family: Literal["gaussian-rbf"] = "gaussian-rbf"

    def __post_init__(self) -> None:
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise DomainError(f"bandwidth must be positive, got {self.bandwidth!r}")

    @property
    def k_max(self) -> float:
        return 1.0

    def evaluate(self, a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
        sq = cdist(a, b, metric="sqeuclidean")
        return np.exp(-sq / (2.0 * self.bandwidth**2))


@dataclass(frozen=True)
class ProductKernel:
    """Pair-space kernel k_X(x, x') * k_Z(z, z') on rows laid out as [x | z]."""

    x_kernel: KernelSpec
    z_kernel: KernelSpec
    x_dim: int

    @property
    def k_max(self) -> float:
        return self.x_kernel.k_max * self.z_kernel.k_max

    def split(self, pts: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return pts[:, : self.x_dim], pts[:, self.x_dim :]

    def evaluate(self, a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
        ax, az = self.split(a)
        bx, bz = self.split(b)
        return self.x_kernel.evaluate(ax, bx) * self.z_kernel.evaluate(az, bz)


@dataclass(frozen=True, eq=False)
class GramBundle:
    """A kernel matrix with its structural flags."""

    matrix: NDArray[np.float64]
    symmetric: bool
    centered: bool = False


def gram(kernel: Kernel, pts_a: ArrayLike, pts_b: ArrayLike | None = None) -> GramBundle:
    """K[i, j] = k(a_i, b_j); with ``pts_b`` omitted the result is exactly symmetric."""
    a = as_points(pts_a)
    if pts_b is None:
        k = kernel.evaluate(a, a)
        k = np.triu(k) + np.triu(k, 1).T
        return GramBundle(k, symmetric=True)
    b = as_points(pts_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return GramBundle(kernel.evaluate(a, b), symmetric=False)


def center(bundle: GramBundle) -> GramBundle:
    """Double centering J K J with J = I - 11^T / n."""
    k = bundle.matrix
    if k.shape[0] != k.shape[1]:
        raise DimensionMismatch("only square Gram matrices can be centered")
    row = k.mean(axis=1, keepdims=True)
    col = k.mean(axis=0, keepdims=True)
    kc = k - row - col + k.mean()
    if bundle.symmetric:
        kc = (kc + kc.T) / 2.0
    return GramBundle(kc, symmetric=bundle.symmetric, centered=True)


@dataclass(frozen=True, eq=False)
class Eigendecomposition:
    """Eigenpairs sorted by descending eigenvalue; columns of ``vectors``."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]


def eigh_psd(k: GramBundle | ArrayLike) -> Eigendecomposition:
    """Eigendecomposition of a symmetric PSD matrix, clamping tiny eigenvalues to 0.

    Raises:
        NotSymmetric: if the matrix is not square or not symmetric.
    """
    mat = k.matrix if isinstance(k, GramBundle) else np.asarray(k, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {mat.shape}")
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    if mat.size and float(np.max(np.abs(mat - mat.T))) > SYMMETRY_TOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    values, vectors = scipy.linalg.eigh((mat + mat.T) / 2.0)
    values, vectors = values[::-1], vectors[:, ::-1]
    top = float(values[0]) if values.size else 0.0
    threshold = EIG_CLAMP_REL * max(top, 0.0)
    values = np.where(values <= threshold, 0.0, values)
    return Eigendecomposition(values=values, vectors=np.ascontiguousarray(vectors))


@dataclass(frozen=True)
class SpectralFilter:
    """Regularized inverse f_lam applied to eigenvalues.

    ``cutoff``: f(mu) = 1/mu if mu >= lam else 0. ``tikhonov``: f(mu) = 1/(mu + lam).
    """

    kind: Literal["cutoff", "tikhonov"]
    lam: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")

    def __call__(self, mu: NDArray[np.float64]) -> NDArray[np.float64]:
        mu = np.asarray(mu, dtype=np.float64)
        if self.kind == "tikhonov":
            return 1.0 / (mu + self.lam)
        out = np.zeros_like(mu)
        keep = (mu >= self.lam) & (mu > 0)
        out[keep] = 1.0 / mu[keep]
        return out

    def ratio(self, mu: NDArray[np.float64]) -> NDArray[np.float64]:
        """f(mu) / mu on mu > 0, else 0."""
        mu = np.asarray(mu, dtype=np.float64)
        out = np.zeros_like(mu)
        pos = mu > 0
        out[pos] = self(mu[pos]) / mu[pos]
        return out


def apply_filter(eig: Eigendecomposition, filt: SpectralFilter) -> NDArray[np.float64]:
    """V diag(f(mu)) V^T."""
    v = eig.vectors
    return (v * filt(eig.values)) @ v.T


def median_heuristic(points: ArrayLike, strict: bool = False) -> float:
    """Lower median of the pairwise Euclidean distances.

    If the lower median is zero but some pair differs, the lower median of the
    positive distances is used. All-identical points give 1.0 with a warning, or
    raise ``DegenerateData`` under ``strict``.
    """
    pts = as_points(points)
    if pts.shape[0] < 2:
        raise TooFewSamples("median heuristic needs at least two points")
    dists = np.sort(pdist(pts))
    positive = dists[dists > 0]
    if positive.size == 0:
        if strict:
            raise DegenerateData("all points are identical")
        logger.warning("All %d points identical; falling back to bandwidth 1.0", pts.shape[0])
        return 1.0
    med = float(dists[(dists.size - 1) // 2])
    if med == 0.0:
        med = float(positive[(positive.size - 1) // 2])
        logger.debug("Median distance is 0; using median of positive distances %.6g", med)
    return med


def kernel_from_points(points: ArrayLike, scale: float = 1.0) -> KernelSpec:
    """RBF kernel with ``scale`` times the median-heuristic bandwidth."""
    return KernelSpec(bandwidth=scale * median_heuristic(points))
