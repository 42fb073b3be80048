"""Class-conditional joint Gaussian family over (X, Z) with a caption-quality knob theta.

Given Y = y, (X, Z) is jointly Gaussian with blocks

    mu_X|0 = 1/2,  mu_X|1 = -1/2,  mu_Z|0 = 2 theta a mu_X|0,  mu_Z|1 = 2 theta b mu_X|1
    C_XX|y = (1 + c_y/4) I,  C_XZ|y = (theta c_y / 2) I,  C_ZZ|y = c_y I

with c_0 = a and c_1 = b. The law of (X, Y) does not depend on theta, so the direct
predictor is the same across the family while the caption Z becomes more informative
as theta grows.

All densities are evaluated in log-space through Cholesky factors.
"""

import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from zeroshotlab.errors import DimensionMismatch, DomainError, SingularCovariance
from zeroshotlab.rng import make_rng

logger = logging.getLogger(__name__)

CHOL_JITTER_REL = 1e-10
CHOL_JITTER_MAX_REL = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)
_MC_CHUNK = 256


def cholesky_jittered(cov: NDArray[np.float64]) -> NDArray[np.float64]:
    """Lower Cholesky factor, retrying with jitter 1e-10 * trace/d up to 1e-6 * trace/d.

    Raises:
        SingularCovariance: if the matrix is not positive definite at the maximum jitter.
    """
    if not np.all(np.isfinite(cov)):
        raise SingularCovariance("covariance has non-finite entries")
    try:
        return np.asarray(scipy.linalg.cholesky(cov, lower=True))
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[0]
    base = float(np.trace(cov)) / d
    if base <= 0:
        raise SingularCovariance("covariance has nonpositive trace")
    for step in range(5):
        jitter = CHOL_JITTER_REL * 10.0**step * base
        try:
            chol = scipy.linalg.cholesky(cov + jitter * np.eye(d), lower=True)
        except np.linalg.LinAlgError:
            continue
        logger.warning("Cholesky needed jitter %.3g (relative %.0e)", jitter, jitter / base)
        return np.asarray(chol)
    raise SingularCovariance(f"covariance singular beyond jitter {CHOL_JITTER_MAX_REL:g} * trace/d")


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal held through its Cholesky factor."""

    mean: NDArray[np.float64]
    chol: NDArray[np.float64]

    @classmethod
    def from_cov(cls, mean: NDArray[np.float64], cov: NDArray[np.float64]) -> "Gaussian":
        return cls(mean=np.asarray(mean, dtype=np.float64), chol=cholesky_jittered(cov))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def logpdf_centered(self, diff: NDArray[np.float64]) -> NDArray[np.float64]:
        """Log-density at ``mean + diff``; ``diff`` has shape (..., d)."""
        flat = diff.reshape(-1, self.dim)
        sol = scipy.linalg.solve_triangular(self.chol, flat.T, lower=True)
        maha = np.sum(sol**2, axis=0)
        out = -0.5 * (maha + self.log_det + self.dim * _LOG_2PI)
        return out.reshape(diff.shape[:-1])

    def logpdf(self, pts: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.logpdf_centered(pts - self.mean)

    def transform(self, eps: NDArray[np.float64]) -> NDArray[np.float64]:
        """Map standard-normal draws (..., d) to this law."""
        return self.mean + eps @ self.chol.T


@dataclass(frozen=True, eq=False)
class ClassBlocks:
    """Mean and covariance blocks of (X, Z) given one class."""

    mu_x: NDArray[np.float64]
    mu_z: NDArray[np.float64]
    c_xx: NDArray[np.float64]
    c_xz: NDArray[np.float64]
    c_zz: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class _ClassLaw:
    """Factorizations derived from one class's blocks."""

    blocks: ClassBlocks
    x_marginal: Gaussian
    z_marginal: Gaussian
    joint: Gaussian
    z_given_x_gain: NDArray[np.float64]  # C_ZX C_XX^{-1}
    z_given_x: Gaussian  # mean 0; shifted per query
    x_given_z_gain: NDArray[np.float64]  # C_XZ C_ZZ^{-1}
    x_given_z: Gaussian

    @classmethod
    def build(cls, blocks: ClassBlocks) -> "_ClassLaw":
        d = blocks.mu_x.shape[0]
        c_zx = blocks.c_xz.T
        joint_cov = np.block([[blocks.c_xx, blocks.c_xz], [c_zx, blocks.c_zz]])
        x_marg = Gaussian.from_cov(blocks.mu_x, blocks.c_xx)
        z_marg = Gaussian.from_cov(blocks.mu_z, blocks.c_zz)
        zx_gain = scipy.linalg.cho_solve((x_marg.chol, True), blocks.c_xz).T
        xz_gain = scipy.linalg.cho_solve((z_marg.chol, True), c_zx).T
        s_zx = blocks.c_zz - zx_gain @ blocks.c_xz
        s_xz = blocks.c_xx - xz_gain @ c_zx
        zero = np.zeros(d)
        return cls(
            blocks=blocks,
            x_marginal=x_marg,
            z_marginal=z_marg,
            joint=Gaussian.from_cov(np.concatenate([blocks.mu_x, blocks.mu_z]), joint_cov),
            z_given_x_gain=zx_gain,
            z_given_x=Gaussian.from_cov(zero, (s_zx + s_zx.T) / 2.0),
            x_given_z_gain=xz_gain,
            x_given_z=Gaussian.from_cov(zero, (s_xz + s_xz.T) / 2.0),
        )

    def z_mean_given_x(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        b = self.blocks
        return b.mu_z + (x - b.mu_x) @ self.z_given_x_gain.T

    def x_mean_given_z(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        b = self.blocks
        return b.mu_x + (z - b.mu_z) @ self.x_given_z_gain.T


def theta_blocks(d: int, a: float, b: float, theta: float) -> tuple[ClassBlocks, ClassBlocks]:
    """The family's per-class blocks."""
    ones, eye = np.ones(d), np.eye(d)
    mu_x0, mu_x1 = 0.5 * ones, -0.5 * ones
    blocks = []
    for c, mu_x in ((a, mu_x0), (b, mu_x1)):
        blocks.append(
            ClassBlocks(
                mu_x=mu_x,
                mu_z=2.0 * theta * c * mu_x,
                c_xx=(1.0 + c / 4.0) * eye,
                c_xz=(theta * c / 2.0) * eye,
                c_zz=c * eye,
            )
        )
    return blocks[0], blocks[1]


@dataclass(frozen=True, eq=False)
class GaussianThetaModel:
    """Two-class joint Gaussian model of (X, Y, Z).

    ``overrides`` replaces the formula blocks with free (mu, C) blocks for testing;
    ``a``, ``b`` and ``theta`` are then informational only.
    """

    d: int = 2
    a: float = 5.0
    b: float = 6.0
    theta: float = 1.0
    p: float = 0.5
    overrides: tuple[ClassBlocks, ClassBlocks] | None = None
    _laws: tuple[_ClassLaw, _ClassLaw] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.d < 1:
            raise DomainError(f"d must be positive, got {self.d}")
        if self.a <= 0 or self.b <= 0:
            raise DomainError("a and b must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta!r}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p!r}")
        blocks = self.overrides or theta_blocks(self.d, self.a, self.b, self.theta)
        for blk in blocks:
            if blk.mu_x.shape != (self.d,) or blk.mu_z.shape != (self.d,):
                raise DimensionMismatch("override means must have length d")
        object.__setattr__(self, "_laws", (_ClassLaw.build(blocks[0]), _ClassLaw.build(blocks[1])))

    @property
    def blocks(self) -> tuple[ClassBlocks, ClassBlocks]:
        return self._laws[0].blocks, self._laws[1].blocks

    def law(self, y: int) -> _ClassLaw:
        return self._laws[y]


def _as_queries(model: GaussianThetaModel, pts: ArrayLike) -> tuple[NDArray[np.float64], bool]:
    arr = np.asarray(pts, dtype=np.float64)
    single = arr.ndim == 1
    arr = arr.reshape(1, -1) if single else arr
    if arr.ndim != 2 or arr.shape[1] != model.d:
        raise DimensionMismatch(f"expected points of dimension {model.d}, got shape {arr.shape}")
    return arr, single


def _posterior(p: float, log_n0: NDArray[np.float64], log_n1: NDArray[np.float64]) -> NDArray[np.float64]:
    """p N1 / (p N1 + (1 - p) N0) from log-densities."""
    if p >= 1.0:
        return np.ones_like(log_n1)
    if p <= 0.0:
        return np.zeros_like(log_n1)
    logit = math.log(p) - math.log1p(-p) + log_n1 - log_n0
    return np.clip(expit(logit), 0.0, 1.0)


def _log_mixture(
    p: NDArray[np.float64] | float, log_n0: NDArray[np.float64], log_n1: NDArray[np.float64]
) -> NDArray[np.float64]:
    with np.errstate(divide="ignore"):
        return np.logaddexp(np.log1p(-np.asarray(p)) + log_n0, np.log(p) + log_n1)


def _unwrap(values: NDArray[np.float64], single: bool) -> float | NDArray[np.float64]:
    return float(values[0]) if single else values


def direct_posterior(model: GaussianThetaModel, x: ArrayLike) -> float | NDArray[np.float64]:
    """P(Y=1 | X=x) for one point (d,) or a batch (n, d)."""
    pts, single = _as_queries(model, x)
    l0 = model.law(0).x_marginal.logpdf(pts)
    l1 = model.law(1).x_marginal.logpdf(pts)
    return _unwrap(_posterior(model.p, l0, l1), single)


def caption_posterior(model: GaussianThetaModel, z: ArrayLike) -> float | NDArray[np.float64]:
    """P(Y=1 | Z=z), the true caption regression g(z) for r(y) = y."""
    pts, single = _as_queries(model, z)
    return _unwrap(_caption_posterior(model, pts), single)


def _caption_posterior(model: GaussianThetaModel, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    l0 = model.law(0).z_marginal.logpdf(pts)
    l1 = model.law(1).z_marginal.logpdf(pts)
    return _posterior(model.p, l0, l1)


def indirect_posterior(
    model: GaussianThetaModel, x: ArrayLike, n_mc: int, seed: int
) -> float | NDArray[np.float64]:
    """Monte Carlo estimate of E[g(Z) | X=x] with g(z) = P(Y=1 | Z=z).

    Z | X=x is the two-component mixture with weights (1 - p(x), p(x)). Both
    components are averaged with the same standard-normal draws and combined with
    their exact weights. Queries are processed in fixed-size chunks so the draws a
    point receives depend only on ``seed`` and its position.
    """
    if n_mc < 1:
        raise DomainError("n_mc must be at least 1")
    pts, single = _as_queries(model, x)
    weights = np.atleast_1d(direct_posterior(model, pts))
    rng = make_rng(seed)
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], _MC_CHUNK):
        block = pts[start : start + _MC_CHUNK]
        eps = rng.standard_normal((block.shape[0], n_mc, model.d))
        means = []
        for y in (0, 1):
            law = model.law(y)
            z = law.z_mean_given_x(block)[:, None, :] + eps @ law.z_given_x.chol.T
            means.append(_caption_posterior(model, z.reshape(-1, model.d)).reshape(z.shape[:2]).mean(axis=1))
        w = weights[start : start + _MC_CHUNK]
        out[start : start + _MC_CHUNK] = (1.0 - w) * means[0] + w * means[1]
    return _unwrap(np.clip(out, 0.0, 1.0), single)


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with its standard error."""

    value: float
    stderr: float


def residual_dependence_mc_estimate(
    model: GaussianThetaModel, n_z: int, n_x: int, seed: int
) -> McEstimate:
    """E_{P_Z}[I(X; Y | Z)] with Y integrated analytically.

    For each caption z ~ P_Z, images are drawn from the mixture P_{X|z} and the
    conditional contingency sum_y P(y|z) (S_z(x, y) - 1)^2 is averaged over them.
    The standard error is taken across captions.
    """
    if n_z < 1 or n_x < 1:
        raise DomainError("n_z and n_x must be at least 1")
    rng = make_rng(seed)
    labels = rng.random(n_z) < model.p
    eps_z = rng.standard_normal((n_z, model.d))
    z = np.where(
        labels[:, None],
        model.law(1).z_marginal.transform(eps_z),
        model.law(0).z_marginal.transform(eps_z),
    )
    pz = _caption_posterior(model, z)

    per_z = np.empty(n_z)
    for start in range(0, n_z, _MC_CHUNK):
        zb, pb = z[start : start + _MC_CHUNK], pz[start : start + _MC_CHUNK]
        rows = zb.shape[0]
        pick = rng.random((rows, n_x)) < pb[:, None]
        eps = rng.standard_normal((rows, n_x, model.d))
        means = [model.law(y).x_mean_given_z(zb) for y in (0, 1)]
        cond = [model.law(y).x_given_z for y in (0, 1)]
        x = np.where(
            pick[:, :, None],
            means[1][:, None, :] + eps @ cond[1].chol.T,
            means[0][:, None, :] + eps @ cond[0].chol.T,
        )
        log_n = [cond[y].logpdf_centered(x - means[y][:, None, :]) for y in (0, 1)]
        log_mix = _log_mixture(pb[:, None], log_n[0], log_n[1])
        contingency = np.zeros((rows, n_x))
        # a class with zero caption posterior contributes nothing (its S may overflow)
        with np.errstate(over="ignore", invalid="ignore"):
            for y, w in ((0, 1.0 - pb), (1, pb)):
                s = np.exp(log_n[y] - log_mix)
                contingency += np.where(w[:, None] > 0, w[:, None] * (s - 1.0) ** 2, 0.0)
        per_z[start : start + rows] = contingency.mean(axis=1)

    stderr = float(per_z.std(ddof=1) / math.sqrt(n_z)) if n_z > 1 else float("nan")
    return McEstimate(value=float(per_z.mean()), stderr=stderr)


def residual_dependence_mc(model: GaussianThetaModel, n_z: int, n_x: int, seed: int) -> float:
    """Point value of :func:`residual_dependence_mc_estimate`."""
    return residual_dependence_mc_estimate(model, n_z, n_x, seed).value


def information_density(
    model: GaussianThetaModel, xs: ArrayLike, zs: ArrayLike
) -> NDArray[np.float64]:
    """R(x_i, z_k) = p(x_i, z_k) / (p(x_i) p(z_k)) on the product grid, shape (n_x, n_z)."""
    x, _ = _as_queries(model, np.atleast_2d(np.asarray(xs, dtype=np.float64)))
    z, _ = _as_queries(model, np.atleast_2d(np.asarray(zs, dtype=np.float64)))
    log_joint, log_x, log_z = [], [], []
    for y in (0, 1):
        law = model.law(y)
        lx = law.x_marginal.logpdf(x)
        diff = z[None, :, :] - law.z_mean_given_x(x)[:, None, :]
        log_joint.append(lx[:, None] + law.z_given_x.logpdf_centered(diff))
        log_x.append(lx)
        log_z.append(law.z_marginal.logpdf(z))
    lj = _log_mixture(model.p, log_joint[0], log_joint[1])
    lpx = _log_mixture(model.p, log_x[0], log_x[1])
    lpz = _log_mixture(model.p, log_z[0], log_z[1])
    return np.exp(lj - lpx[:, None] - lpz[None, :])


@dataclass(frozen=True)
class CiConditions:
    """Gaps between the two classes' laws of X given Z; all zero iff X is independent of Y given Z."""

    intercept_gap: float
    slope_gap: float
    covariance_gap: float

    @property
    def holds(self) -> bool:
        return max(self.intercept_gap, self.slope_gap, self.covariance_gap) < 1e-12


def ci_conditions(model: GaussianThetaModel) -> CiConditions:
    """Compare intercept, slope and residual covariance of X | Z across classes."""
    l0, l1 = model.law(0), model.law(1)

    def intercept(law: _ClassLaw) -> NDArray[np.float64]:
        return law.blocks.mu_x - law.x_given_z_gain @ law.blocks.mu_z

    def residual_cov(law: _ClassLaw) -> NDArray[np.float64]:
        return law.x_given_z.chol @ law.x_given_z.chol.T

    return CiConditions(
        intercept_gap=float(np.max(np.abs(intercept(l0) - intercept(l1)))),
        slope_gap=float(np.max(np.abs(l0.x_given_z_gain - l1.x_given_z_gain))),
        covariance_gap=float(np.max(np.abs(residual_cov(l0) - residual_cov(l1)))),
    )


def intercept_root(model: GaussianThetaModel) -> float:
    """The theta at which the family's intercept gap vanishes, sqrt(2 / (a + b))."""
    return math.sqrt(2.0 / (model.a + model.b))


@dataclass(frozen=True, eq=False)
class SampleTriple:
    """One realization of (X, Y, Z)."""

    x: NDArray[np.float64]
    y: int
    z: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Columnar storage of n sampled triples."""

    xs: NDArray[np.float64]
    ys: NDArray[np.int64]
    zs: NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.ys.shape[0])

    def __iter__(self) -> Iterator[SampleTriple]:
        for i in range(len(self)):
            yield SampleTriple(x=self.xs[i], y=int(self.ys[i]), z=self.zs[i])

    def csv_header(self) -> list[str]:
        d = self.xs.shape[1]
        return [f"x_{i}" for i in range(d)] + ["y"] + [f"z_{i}" for i in range(d)]

    def csv_rows(self) -> list[list[float | int]]:
        return [
            [*map(float, self.xs[i]), int(self.ys[i]), *map(float, self.zs[i])]
            for i in range(len(self))
        ]


def sample(model: GaussianThetaModel, n: int, seed: int) -> SampleBatch:
    """Draw y ~ Bernoulli(p), then (x, z) from the class-y joint Gaussian."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = make_rng(seed)
    ys = (rng.random(n) < model.p).astype(np.int64)
    eps = rng.standard_normal((n, 2 * model.d))
    xz = np.where(
        ys[:, None] == 1,
        model.law(1).joint.transform(eps),
        model.law(0).joint.transform(eps),
    )
    return SampleBatch(xs=xz[:, : model.d].copy(), ys=ys, zs=xz[:, model.d :].copy())
