"""Exception hierarchy shared by every module of the lab."""


class ZeroShotLabError(Exception):
    """Base class for all lab errors."""


class ZeroMarginal(ZeroShotLabError, ValueError):
    """A marginal mass needed as a divisor is zero."""


class ZeroConditioner(ZeroShotLabError, ValueError):
    """A conditioning event with positive weight has zero mass under the conditioner."""


class BadRank(ZeroShotLabError, ValueError):
    """Truncation rank outside the admissible range."""


class NotAbsolutelyContinuous(ZeroShotLabError, ValueError):
    """A density ratio is requested where the reference measure vanishes."""


class SingularCovariance(ZeroShotLabError, ValueError):
    """A covariance stayed singular after the maximum jitter."""


class DimensionMismatch(ZeroShotLabError, ValueError):
    """Arrays have incompatible shapes."""


class NotSymmetric(ZeroShotLabError, ValueError):
    """A matrix expected to be symmetric is not."""


class DegenerateData(ZeroShotLabError, ValueError):
    """Data carries no spread (e.g. all points identical)."""


class EmptySample(ZeroShotLabError, ValueError):
    """An estimator or metric received no samples."""


class KernelMismatch(ZeroShotLabError, ValueError):
    """Two fitted models were built on different kernels."""


class TooFewSamples(ZeroShotLabError, ValueError):
    """Not enough samples for the requested operation."""


class RankDeficient(ZeroShotLabError, ValueError):
    """Fewer positive directions than requested."""


class TooFewValues(ZeroShotLabError, ValueError):
    """Not enough values to fit."""


class DomainError(ZeroShotLabError, ValueError):
    """A parameter lies outside the domain of a formula."""


class Unsupported(ZeroShotLabError):
    """The requested combination has no exact evaluation."""


class MissingClass(ZeroShotLabError, ValueError):
    """A class has no prompts."""


class BadK(ZeroShotLabError, ValueError):
    """Top-k cutoff outside 1..C."""


class WhiteningFailure(ZeroShotLabError, ValueError):
    """A batch covariance is singular and cannot be whitened."""


class NonFiniteLoss(ZeroShotLabError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, step: int, value: float) -> None:
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


class ConfigError(ZeroShotLabError, ValueError):
    """An experiment config failed validation."""


class IdentityViolation(ZeroShotLabError):
    """Two computations that must agree (or an inequality that must hold) do not."""
