"""Exact population quantities on finite alphabets.

Every quantity the estimators approximate has a closed form here: the information
density R, the SVD of the conditional mean operator, the mean square contingency,
the direct and indirect predictors, prompt bias and residual dependence. The sweep
harness and the identity battery use these functions as ground truth.

Tables are dense row-major arrays. A mass at or below ``POSITIVITY_TOL`` counts as
zero wherever it would be used as a divisor.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from zeroshotlab.errors import (
    BadRank,
    DimensionMismatch,
    DomainError,
    IdentityViolation,
    NotAbsolutelyContinuous,
    ZeroConditioner,
    ZeroMarginal,
)

logger = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-14
SUM_TOL = 1e-12
IDENTITY_TOL = 1e-10
BOUND_TOL = 1e-12


def _as_table(probs: ArrayLike, ndim: int, name: str) -> NDArray[np.float64]:
    arr = np.array(probs, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} table must have {ndim} axes, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionMismatch(f"{name} table is empty")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} table entries must be finite and nonnegative")
    total = float(arr.sum())
    if abs(total - 1.0) > SUM_TOL:
        raise DomainError(f"{name} table sums to {total!r}, expected 1")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Joint table Q(x, z) of the pre-training pair."""

    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _as_table(self.probs, 2, "joint"))

    @property
    def x_size(self) -> int:
        return int(self.probs.shape[0])

    @property
    def z_size(self) -> int:
        return int(self.probs.shape[1])

    @property
    def q_x(self) -> NDArray[np.float64]:
        return self.probs.sum(axis=1)

    @property
    def q_z(self) -> NDArray[np.float64]:
        return self.probs.sum(axis=0)


@dataclass(frozen=True, eq=False)
class DiscreteTriple:
    """Joint table P(x, y, z) of image, label and caption."""

    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _as_table(self.probs, 3, "triple"))

    @property
    def x_size(self) -> int:
        return int(self.probs.shape[0])

    @property
    def y_size(self) -> int:
        return int(self.probs.shape[1])

    @property
    def z_size(self) -> int:
        return int(self.probs.shape[2])

    @property
    def p_x(self) -> NDArray[np.float64]:
        return self.probs.sum(axis=(1, 2))

    @property
    def p_y(self) -> NDArray[np.float64]:
        return self.probs.sum(axis=(0, 2))

    @property
    def p_z(self) -> NDArray[np.float64]:
        return self.probs.sum(axis=(0, 1))

    @property
    def p_xy(self) -> NDArray[np.float64]:
        """Evaluation distribution P(x, y)."""
        return self.probs.sum(axis=2)

    def xz_joint(self) -> DiscreteJoint:
        """Pre-training pair law P(x, z) obtained by marginalizing the label."""
        return DiscreteJoint(self.probs.sum(axis=1))

    def yz_table(self) -> "PromptTable":
        """The unbiased prompt distribution P(y, z)."""
        return PromptTable(self.probs.sum(axis=0))


@dataclass(frozen=True, eq=False)
class PromptTable:
    """Prompt distribution rho(y, z)."""

    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _as_table(self.probs, 2, "prompt"))

    @property
    def y_size(self) -> int:
        return int(self.probs.shape[0])

    @property
    def z_size(self) -> int:
        return int(self.probs.shape[1])

    @property
    def rho_y(self) -> NDArray[np.float64]:
        return self.probs.sum(axis=1)

    @property
    def rho_z(self) -> NDArray[np.float64]:
        return self.probs.sum(axis=0)


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Singular system of the conditional mean operator.

    Column ``i`` of ``left_functions`` is alpha_i evaluated on the X alphabet, column
    ``i`` of ``right_functions`` is beta_i on the Z alphabet. Both families are
    orthonormal in L2 of the respective marginal.
    """

    singular_values: NDArray[np.float64]
    left_functions: NDArray[np.float64]
    right_functions: NDArray[np.float64]

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])

    def reconstruct(self, d: int | None = None) -> NDArray[np.float64]:
        """Sum of the leading ``d`` terms sigma_i alpha_i(x) beta_i(z) (all by default)."""
        k = self.rank if d is None else d
        return (self.left_functions[:, :k] * self.singular_values[:k]) @ self.right_functions[
            :, :k
        ].T


def _positive_marginals(joint: DiscreteJoint) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    q_x, q_z = joint.q_x, joint.q_z
    if np.any(q_x <= POSITIVITY_TOL):
        raise ZeroMarginal(f"Q_X vanishes at x={int(np.argmin(q_x))}")
    if np.any(q_z <= POSITIVITY_TOL):
        raise ZeroMarginal(f"Q_Z vanishes at z={int(np.argmin(q_z))}")
    return q_x, q_z


def information_density(joint: DiscreteJoint) -> NDArray[np.float64]:
    """R(x, z) = Q(x, z) / (Q_X(x) Q_Z(z))."""
    q_x, q_z = _positive_marginals(joint)
    return joint.probs / np.outer(q_x, q_z)


def conditional_mean_svd(joint: DiscreteJoint) -> SpectrumResult:
    """SVD of A = D_X^{1/2} C D_Z^{-1/2} with C[x, z] = Q(z | x).

    The leading pair is the constant function on both sides with sigma_1 = 1; its sign
    is fixed so that alpha_1 > 0.

    Raises:
        ZeroMarginal: if a marginal entry vanishes.
        IdentityViolation: if ||A||_F^2 differs from E_{Q_X x Q_Z}[R^2].
    """
    q_x, q_z = _positive_marginals(joint)
    sqrt_x, sqrt_z = np.sqrt(q_x), np.sqrt(q_z)
    a = joint.probs / np.outer(sqrt_x, sqrt_z)
    u, s, vt = scipy.linalg.svd(a, full_matrices=False)

    # Orient every pair; the first ends up positive
    for i in range(s.shape[0]):
        if u[:, i].sum() < 0:
            u[:, i] *= -1.0
            vt[i, :] *= -1.0

    r = joint.probs / np.outer(q_x, q_z)
    energy = float(np.sum(np.outer(q_x, q_z) * r**2))
    frob = float(np.sum(s**2))
    if abs(frob - energy) > IDENTITY_TOL * max(1.0, energy):
        raise IdentityViolation(f"||A||_F^2={frob!r} but E[R^2]={energy!r}")

    return SpectrumResult(
        singular_values=np.clip(s, 0.0, None),
        left_functions=u / sqrt_x[:, None],
        right_functions=vt.T / sqrt_z[:, None],
    )


def msc(joint: DiscreteJoint) -> float:
    """Mean square contingency I(X; Z) = E_{Q_X x Q_Z}[(R - 1)^2].

    Cross-checked against sum_{i>=2} sigma_i^2 of the conditional mean operator.
    """
    q_x, q_z = _positive_marginals(joint)
    weights = np.outer(q_x, q_z)
    value = float(np.sum(weights * (joint.probs / weights - 1.0) ** 2))
    spectral = float(np.sum(conditional_mean_svd(joint).singular_values[1:] ** 2))
    if abs(value - spectral) > IDENTITY_TOL * max(1.0, value):
        raise IdentityViolation(f"msc {value!r} disagrees with spectral sum {spectral!r}")
    return value


def lancaster_truncate(joint: DiscreteJoint, d: int) -> tuple[NDArray[np.float64], float]:
    """Rank-``d`` Lancaster truncation R_d and its tail energy sum_{i>d} sigma_i^2."""
    spectrum = conditional_mean_svd(joint)
    if not 1 <= d <= spectrum.rank:
        raise BadRank(f"d must lie in 1..{spectrum.rank}, got {d}")
    tail = float(np.sum(spectrum.singular_values[d:] ** 2))
    return spectrum.reconstruct(d), tail


def _conditional_mean(
    table: NDArray[np.float64], r: NDArray[np.float64], marginal: NDArray[np.float64]
) -> NDArray[np.float64]:
    """E[r(Y) | Z=z] from a (y, z) table; zero where the marginal vanishes."""
    out = np.zeros(table.shape[1])
    mask = marginal > POSITIVITY_TOL
    out[mask] = (r @ table[:, mask]) / marginal[mask]
    return out


@dataclass(frozen=True, eq=False)
class EstimationLedger:
    """Error split of an estimate eta_hat against the direct predictor."""

    information_error: float  # ||eta_* - eta_rho||^2 in L2(P_X)
    estimation_error: float  # ||eta_rho - eta_hat||^2 in L2(P_X)
    total_error: float  # ||eta_* - eta_hat||^2 in L2(P_X)
    bound: float
    ok: bool


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    """Exact predictors and the bias / dependence ledger of a prompted triple."""

    p_x: NDArray[np.float64]
    eta_star: NDArray[np.float64]
    g_rho: NDArray[np.float64]
    g_true: NDArray[np.float64]
    eta_rho: NDArray[np.float64]
    prompt_bias: float
    residual_dependence: float
    b_r: float
    lhs: float
    rhs: float | None  # None when the pre-training law differs from P_{X,Z}

    @property
    def bound_ok(self) -> bool:
        return self.rhs is None or self.lhs <= self.rhs + BOUND_TOL

    def with_estimate(self, eta_hat: ArrayLike) -> EstimationLedger:
        """Split the error of ``eta_hat`` into information and estimation terms."""
        est = np.asarray(eta_hat, dtype=np.float64)
        if est.shape != self.eta_star.shape:
            raise DimensionMismatch(f"eta_hat has shape {est.shape}, expected {self.eta_star.shape}")
        estimation = float(self.p_x @ (self.eta_rho - est) ** 2)
        total = float(self.p_x @ (self.eta_star - est) ** 2)
        bound = 2.0 * self.lhs + 2.0 * estimation
        return EstimationLedger(self.lhs, estimation, total, bound, total <= bound + BOUND_TOL)

    def with_shifted_estimate(self, eta_hat: ArrayLike, q_x: ArrayLike) -> EstimationLedger:
        """As :meth:`with_estimate`, with the estimation error measured under ``q_x``.

        The P_X-norm of the estimation error is recovered through the additive
        shift relation, so the bound gains ``2 * sup|eta_rho - eta_hat|^2 * TV``.
        """
        est = np.asarray(eta_hat, dtype=np.float64)
        q = np.asarray(q_x, dtype=np.float64)
        if est.shape != self.eta_star.shape or q.shape != self.p_x.shape:
            raise DimensionMismatch("eta_hat and q_x must live on the X alphabet")
        diff = self.eta_rho - est
        estimation_q = float(q @ diff**2)
        tv = float(np.abs(self.p_x - q).sum())
        sup = float(np.max(np.abs(diff)))
        total = float(self.p_x @ (self.eta_star - est) ** 2)
        bound = 2.0 * self.lhs + 2.0 * (estimation_q + sup**2 * tv)
        return EstimationLedger(self.lhs, estimation_q, total, bound, total <= bound + BOUND_TOL)


def residual_dependence(triple: DiscreteTriple) -> float:
    """E_{P_Z}[I(X; Y | Z)] by exhaustive summation; z-atoms of zero mass are skipped."""
    p_z = triple.p_z
    total = 0.0
    for z in np.flatnonzero(p_z > POSITIVITY_TOL):
        cond = triple.probs[:, :, z] / p_z[z]
        px, py = cond.sum(axis=1), cond.sum(axis=0)
        live_x, live_y = px > POSITIVITY_TOL, py > POSITIVITY_TOL
        live = np.outer(live_x, live_y)
        if np.any((cond > POSITIVITY_TOL) & ~live):
            raise NotAbsolutelyContinuous(
                f"P(x, y | z={int(z)}) has mass outside the product of its marginals"
            )
        prod = np.outer(px, py)
        s = np.where(live, cond / np.where(live, prod, 1.0), 1.0)
        total += float(p_z[z]) * float(np.sum(prod * (s - 1.0) ** 2))
    return total


def predictors_and_bound(
    triple: DiscreteTriple,
    prompt: PromptTable,
    r: ArrayLike,
    b_r: float | None = None,
    pretrain: DiscreteJoint | None = None,
) -> DecompositionReport:
    """Exact direct and indirect predictors with the prompt-bias / dependence bound.

    Args:
        triple: Evaluation law P(x, y, z).
        prompt: Prompt law rho(y, z) on the same label and caption alphabets.
        r: Label function as a vector over Y.
        b_r: Bound on |r|; defaults to max |r|.
        pretrain: Pre-training law Q(x, z); defaults to P(x, z) from the triple. The
            bound is only asserted when the two agree.

    Returns:
        The decomposition report.

    Raises:
        ZeroMarginal: if P_X vanishes somewhere.
        ZeroConditioner: if rho_Z vanishes on a caption that P_Z or Q_Z weights.
        IdentityViolation: if the bound fails.
    """
    r_vec = np.asarray(r, dtype=np.float64)
    if r_vec.shape != (triple.y_size,):
        raise DimensionMismatch(f"r must have length {triple.y_size}, got shape {r_vec.shape}")
    if prompt.probs.shape != (triple.y_size, triple.z_size):
        raise DimensionMismatch("prompt table must be indexed by the triple's (y, z) alphabets")
    if pretrain is not None and pretrain.probs.shape != (triple.x_size, triple.z_size):
        raise DimensionMismatch("pre-training table must be indexed by the triple's (x, z)")

    r_max = float(np.max(np.abs(r_vec)))
    bound_r = r_max if b_r is None else float(b_r)
    if r_max > bound_r + BOUND_TOL:
        raise DomainError(f"|r| reaches {r_max!r}, above the stated bound {bound_r!r}")

    p_x = triple.p_x
    if np.any(p_x <= POSITIVITY_TOL):
        raise ZeroMarginal(f"P_X vanishes at x={int(np.argmin(p_x))}")
    p_z = triple.p_z

    q_xz = triple.probs.sum(axis=1) if pretrain is None else pretrain.probs
    q_x, q_z = q_xz.sum(axis=1), q_xz.sum(axis=0)
    if np.any(q_x <= POSITIVITY_TOL):
        raise ZeroMarginal(f"Q_X vanishes at x={int(np.argmin(q_x))}")

    rho_z = prompt.rho_z
    starved = (rho_z <= POSITIVITY_TOL) & ((p_z > POSITIVITY_TOL) | (q_z > POSITIVITY_TOL))
    if np.any(starved):
        raise ZeroConditioner(f"rho_Z vanishes at weighted caption z={int(np.argmax(starved))}")

    eta_star = (triple.p_xy @ r_vec) / p_x
    g_rho = _conditional_mean(prompt.probs, r_vec, rho_z)
    g_true = _conditional_mean(triple.probs.sum(axis=0), r_vec, p_z)
    eta_rho = (q_xz / q_x[:, None]) @ g_rho

    bias = float(p_z @ (g_rho - g_true) ** 2)
    resdep = residual_dependence(triple)
    lhs = float(p_x @ (eta_rho - eta_star) ** 2)

    rhs: float | None = None
    if pretrain is None:
        rhs = 2.0 * bias + 2.0 * bound_r**2 * resdep
        if lhs > rhs + BOUND_TOL:
            raise IdentityViolation(f"||eta_rho - eta_*||^2={lhs!r} exceeds bound {rhs!r}")

    return DecompositionReport(
        p_x=p_x,
        eta_star=eta_star,
        g_rho=g_rho,
        g_true=g_true,
        eta_rho=eta_rho,
        prompt_bias=bias,
        residual_dependence=resdep,
        b_r=bound_r,
        lhs=lhs,
        rhs=rhs,
    )


@dataclass(frozen=True)
class ShiftCheck:
    """Outcome of the additive / multiplicative shift relations."""

    tv: float
    norm_p: float
    norm_q: float
    additive_rhs: float
    additive_ok: bool
    multiplicative_ok: bool | None = None


def _probability_vector(v: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector")
    if np.any(arr < 0) or abs(float(arr.sum()) - 1.0) > SUM_TOL:
        raise DomainError(f"{name} is not a probability vector")
    return arr


def distribution_shift_check(
    p: ArrayLike, q: ArrayLike, eta: ArrayLike, b_pq: float | None = None
) -> ShiftCheck:
    """Check the L2 change-of-measure relations between ``p`` and ``q``.

    Additive: ||eta||_p^2 <= ||eta||_q^2 + ||eta||_inf^2 * tv with tv = sum |p - q|.
    Multiplicative (when ``b_pq`` is given): ||eta||_p^2 <= b_pq * ||eta||_q^2.

    Raises:
        NotAbsolutelyContinuous: if the multiplicative check is requested and the
            supports of ``p`` and ``q`` differ.
    """
    p_vec = _probability_vector(p, "p")
    q_vec = _probability_vector(q, "q")
    eta_vec = np.asarray(eta, dtype=np.float64)
    if not (p_vec.shape == q_vec.shape == eta_vec.shape):
        raise DimensionMismatch("p, q and eta must share one alphabet")

    tv = float(np.abs(p_vec - q_vec).sum())
    norm_p = float(p_vec @ eta_vec**2)
    norm_q = float(q_vec @ eta_vec**2)
    sup_sq = float(np.max(eta_vec**2))
    additive_rhs = norm_q + sup_sq * tv

    multiplicative_ok: bool | None = None
    if b_pq is not None:
        p_live, q_live = p_vec > POSITIVITY_TOL, q_vec > POSITIVITY_TOL
        if np.any(q_live & ~p_live):
            raise NotAbsolutelyContinuous("q charges an atom where p vanishes")
        if np.any(p_live & ~q_live):
            raise NotAbsolutelyContinuous("p charges an atom where q vanishes; dp/dq unbounded")
        multiplicative_ok = norm_p <= b_pq * norm_q + BOUND_TOL

    return ShiftCheck(
        tv=tv,
        norm_p=norm_p,
        norm_q=norm_q,
        additive_rhs=additive_rhs,
        additive_ok=norm_p <= additive_rhs + BOUND_TOL,
        multiplicative_ok=multiplicative_ok,
    )


def likelihood_ratio_bound(p: ArrayLike, q: ArrayLike) -> float:
    """max_x p(x) / q(x), the smallest admissible ``b_pq``."""
    p_vec = _probability_vector(p, "p")
    q_vec = _probability_vector(q, "q")
    q_live = q_vec > POSITIVITY_TOL
    if np.any((p_vec > POSITIVITY_TOL) & ~q_live):
        raise NotAbsolutelyContinuous("p charges an atom where q vanishes")
    return float(np.max(p_vec[q_live] / q_vec[q_live]))


def conditional_independence_gap(triple: DiscreteTriple) -> float:
    """max over (x, y, z) of |P(x, y | z) - P(x | z) P(y | z)| on atoms with P_Z > 0."""
    p_z = triple.p_z
    gap = 0.0
    for z in np.flatnonzero(p_z > POSITIVITY_TOL):
        cond = triple.probs[:, :, z] / p_z[z]
        gap = max(gap, float(np.max(np.abs(cond - np.outer(cond.sum(1), cond.sum(0))))))
    return gap


def ci_triple(
    p_z: ArrayLike, x_given_z: ArrayLike, y_given_z: ArrayLike
) -> DiscreteTriple:
    """Triple with X independent of Y given Z.

    ``x_given_z`` is an |X| x |Z| column-stochastic matrix, ``y_given_z`` |Y| x |Z|.
    """
    pz = _probability_vector(p_z, "p_z")
    px_z = np.asarray(x_given_z, dtype=np.float64)
    py_z = np.asarray(y_given_z, dtype=np.float64)
    if px_z.shape[1] != pz.shape[0] or py_z.shape[1] != pz.shape[0]:
        raise DimensionMismatch("conditionals must have one column per caption")
    probs = np.einsum("z,xz,yz->xyz", pz, px_z, py_z)
    return DiscreteTriple(probs / probs.sum())


def _dirichlet_table(rng: np.random.Generator, shape: tuple[int, ...], floor: float) -> NDArray[np.float64]:
    raw = rng.dirichlet(np.ones(int(np.prod(shape)))) + floor
    return (raw / raw.sum()).reshape(shape)


def random_joint(
    rng: np.random.Generator, x_size: int, z_size: int, floor: float = 1e-3
) -> DiscreteJoint:
    """Strictly positive random joint table."""
    return DiscreteJoint(_dirichlet_table(rng, (x_size, z_size), floor))


def random_triple(
    rng: np.random.Generator, x_size: int, y_size: int, z_size: int, floor: float = 1e-3
) -> DiscreteTriple:
    """Strictly positive random triple table."""
    return DiscreteTriple(_dirichlet_table(rng, (x_size, y_size, z_size), floor))


def random_prompt(
    rng: np.random.Generator, y_size: int, z_size: int, floor: float = 1e-3
) -> PromptTable:
    """Strictly positive random prompt table."""
    return PromptTable(_dirichlet_table(rng, (y_size, z_size), floor))
