"""Toy encoder pair and a finite-difference gradient-descent trainer."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray

from zeroshotlab.errors import DomainError, NonFiniteLoss
from zeroshotlab.rng import make_rng
from zeroshotlab.simulation.gaussian import SampleBatch
from zeroshotlab.ssl.objectives import (
    EmbeddingBatch,
    barlow_twins_loss,
    clip_loss,
    spectral_contrastive_loss,
    vicreg_loss,
)

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = 16
DEFAULT_REL_STEP = 1e-4
DEFAULT_MAX_GRAD_NORM = 1.0


class Objective(StrEnum):
    """Training objectives the toy trainer can minimize."""

    CLIP = "clip"
    VICREG = "vicreg"
    SPECTRAL = "spectral"
    BARLOW_TWINS = "barlow_twins"


def objective_fn(objective: Objective) -> Callable[[EmbeddingBatch], NDArray[np.float64]]:
    """Batched loss for ``objective``; always returns an array over leading axes."""

    def run(batch: EmbeddingBatch) -> NDArray[np.float64]:
        if objective is Objective.CLIP:
            value = clip_loss(batch)
        elif objective is Objective.VICREG:
            value = vicreg_loss(batch).total
        elif objective is Objective.SPECTRAL:
            value = spectral_contrastive_loss(batch)
        else:
            value = barlow_twins_loss(batch)
        return np.asarray(value, dtype=np.float64)

    return run


@dataclass(frozen=True)
class _Layout:
    in_dim: int
    hidden: int
    out_dim: int

    @property
    def size(self) -> int:
        return self.hidden * self.in_dim + self.hidden + self.out_dim * self.hidden + self.out_dim


@dataclass(frozen=True, eq=False)
class ToyEncoderPair:
    """Two one-hidden-layer tanh encoders X -> R^d and Z -> R^d on a flat parameter vector.

    The vector is laid out as [W1_x, b1_x, W2_x, b2_x, W1_z, b1_z, W2_z, b2_z]. Methods
    accept parameter stacks of shape (..., n_params).
    """

    x_dim: int = 2
    z_dim: int = 2
    out_dim: int = 2
    hidden: int = DEFAULT_HIDDEN
    _x: _Layout = field(init=False, repr=False)
    _z: _Layout = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if min(self.x_dim, self.z_dim, self.out_dim, self.hidden) < 1:
            raise DomainError("encoder dimensions must be positive")
        object.__setattr__(self, "_x", _Layout(self.x_dim, self.hidden, self.out_dim))
        object.__setattr__(self, "_z", _Layout(self.z_dim, self.hidden, self.out_dim))

    @property
    def n_params(self) -> int:
        return self._x.size + self._z.size

    def init(self, seed: int) -> NDArray[np.float64]:
        """Gaussian initialization scaled by 1/sqrt(fan_in); biases start at zero."""
        rng = make_rng(seed)
        parts = []
        for layout in (self._x, self._z):
            parts += [
                rng.standard_normal(layout.hidden * layout.in_dim) / np.sqrt(layout.in_dim),
                np.zeros(layout.hidden),
                rng.standard_normal(layout.out_dim * layout.hidden) / np.sqrt(layout.hidden),
                np.zeros(layout.out_dim),
            ]
        return np.concatenate(parts)

    @staticmethod
    def _forward(layout: _Layout, params: NDArray[np.float64], pts: NDArray[np.float64]) -> NDArray[np.float64]:
        lead = params.shape[:-1]
        h, i, o = layout.hidden, layout.in_dim, layout.out_dim
        cut = np.cumsum([h * i, h, o * h])
        w1 = params[..., : cut[0]].reshape(*lead, h, i)
        b1 = params[..., cut[0] : cut[1]]
        w2 = params[..., cut[1] : cut[2]].reshape(*lead, o, h)
        b2 = params[..., cut[2] :]
        hidden = np.tanh(pts @ np.swapaxes(w1, -1, -2) + b1[..., None, :])
        return np.asarray(hidden @ np.swapaxes(w2, -1, -2) + b2[..., None, :])

    def _check(self, params: NDArray[np.float64]) -> None:
        if params.shape[-1] != self.n_params:
            raise DomainError(f"expected {self.n_params} parameters, got {params.shape[-1]}")

    def encode_x(self, params: NDArray[np.float64], xs: NDArray[np.float64]) -> NDArray[np.float64]:
        self._check(params)
        return self._forward(self._x, params[..., : self._x.size], xs)

    def encode_z(self, params: NDArray[np.float64], zs: NDArray[np.float64]) -> NDArray[np.float64]:
        self._check(params)
        return self._forward(self._z, params[..., self._x.size :], zs)

    def embed(self, params: NDArray[np.float64], xs: NDArray[np.float64], zs: NDArray[np.float64]) -> EmbeddingBatch:
        return EmbeddingBatch(self.encode_x(params, xs), self.encode_z(params, zs))


def finite_difference_gradient(
    fn: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    params: NDArray[np.float64],
    rel_step: float = DEFAULT_REL_STEP,
) -> NDArray[np.float64]:
    """Central differences with h_j = rel_step * (1 + |theta_j|).

    ``fn`` maps a stack (k, P) of parameter vectors to k values; all 2P perturbations
    are evaluated in one call.
    """
    theta = np.asarray(params, dtype=np.float64)
    step = rel_step * (1.0 + np.abs(theta))
    shift = np.diag(step)
    values = np.asarray(fn(np.vstack([theta + shift, theta - shift])), dtype=np.float64)
    p = theta.shape[0]
    return (values[:p] - values[p:]) / (2.0 * step)


@dataclass(frozen=True)
class TraceRow:
    """Mini-batch loss before the update at ``step``."""

    step: int
    loss: float


@dataclass(frozen=True, eq=False)
class TrainResult:
    """Trained parameters and the recorded loss trace."""

    encoders: ToyEncoderPair
    params: NDArray[np.float64]
    objective: Objective
    seed: int
    trace: list[TraceRow]

    def csv_header(self) -> list[str]:
        return ["step", "loss", "objective", "seed"]

    def csv_rows(self) -> list[list[float | int | str]]:
        return [[row.step, row.loss, str(self.objective), self.seed] for row in self.trace]


def full_loss(
    objective: Objective, encoders: ToyEncoderPair, params: NDArray[np.float64], data: SampleBatch
) -> float:
    """Objective on the whole dataset."""
    return float(objective_fn(objective)(encoders.embed(params, data.xs, data.zs)))


def train_toy(
    objective: Objective,
    data: SampleBatch,
    encoders: ToyEncoderPair,
    steps: int,
    lr: float,
    seed: int,
    params: NDArray[np.float64] | None = None,
    batch_size: int = 256,
    rel_step: float = DEFAULT_REL_STEP,
    max_grad_norm: float | None = DEFAULT_MAX_GRAD_NORM,
) -> TrainResult:
    """Gradient descent on central finite-difference gradients of mini-batch losses.

    Gradients longer than ``max_grad_norm`` are rescaled to that length before the
    update.

    Args:
        objective: Loss to minimize.
        data: Pre-training pairs; labels are ignored.
        encoders: Encoder architecture.
        steps: Number of updates; 0 returns the initial parameters.
        lr: Step size.
        seed: Seeds the initialization (when ``params`` is None) and batch sampling.
        params: Starting parameters.
        batch_size: Mini-batch size, capped at the dataset size.
        rel_step: Relative finite-difference step.
        max_grad_norm: Euclidean cap on each update direction; None disables clipping.

    Raises:
        NonFiniteLoss: if a mini-batch loss or gradient is not finite.
    """
    if steps < 0:
        raise DomainError(f"steps must be nonnegative, got {steps}")
    if lr <= 0:
        raise DomainError(f"lr must be positive, got {lr!r}")
    if max_grad_norm is not None and max_grad_norm <= 0:
        raise DomainError(f"max_grad_norm must be positive, got {max_grad_norm!r}")
    theta = encoders.init(seed) if params is None else np.array(params, dtype=np.float64)
    loss_of = objective_fn(objective)
    rng = make_rng(seed, 1)
    size = min(batch_size, len(data))
    trace: list[TraceRow] = []
    clipped = 0

    for step in range(steps):
        idx = rng.choice(len(data), size=size, replace=False)
        xs, zs = data.xs[idx], data.zs[idx]

        def batch_loss(
            stack: NDArray[np.float64],
            xs: NDArray[np.float64] = xs,
            zs: NDArray[np.float64] = zs,
        ) -> NDArray[np.float64]:
            return loss_of(encoders.embed(stack, xs, zs))

        value = float(batch_loss(theta[None, :])[0])
        if not np.isfinite(value):
            raise NonFiniteLoss(step, value)
        grad = finite_difference_gradient(batch_loss, theta, rel_step)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteLoss(step, float("nan"))
        trace.append(TraceRow(step=step, loss=value))
        norm = float(np.linalg.norm(grad))
        if max_grad_norm is not None and norm > max_grad_norm:
            grad = grad * (max_grad_norm / norm)
            clipped += 1
        theta = theta - lr * grad

    if trace:
        logger.debug(
            "Trained %s for %d steps (%d clipped): loss %.4g -> %.4g",
            objective,
            steps,
            clipped,
            trace[0].loss,
            trace[-1].loss,
        )
    return TrainResult(encoders=encoders, params=theta, objective=objective, seed=seed, trace=trace)
