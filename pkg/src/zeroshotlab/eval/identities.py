"""Identity battery: exact identities and inequalities over seeded random instances.

Each check draws its own instances from ``make_rng(seed, index)`` and reports the
largest deviation it saw. A fault names one check whose computed side is shifted by
``FAULT_DELTA`` so the harness can be shown to catch a broken identity.
"""

import json
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from zeroshotlab import __version__
from zeroshotlab.classify.zeroshot import class_posteriors, excess_risk_check
from zeroshotlab.errors import ConfigError
from zeroshotlab.eval.persistence import write_json
from zeroshotlab.models import ExperimentConfig, IdentityCheck, IdentityReport
from zeroshotlab.oracle.discrete import (
    BOUND_TOL,
    IDENTITY_TOL,
    ci_triple,
    conditional_mean_svd,
    distribution_shift_check,
    information_density,
    lancaster_truncate,
    likelihood_ratio_bound,
    predictors_and_bound,
    random_joint,
    random_prompt,
    random_triple,
)
from zeroshotlab.rng import make_rng
from zeroshotlab.ssl.objectives import (
    EmbeddingBatch,
    clip_loss,
    clip_taylor_gap,
    spectral_contrastive_loss,
    spectral_contrastive_loss_loop,
    vicreg_identity_gap,
)

logger = logging.getLogger(__name__)

FAULT_DELTA = 1.0
SSL_TOL = 1e-12
ROTATION_TOL = 1e-10
TAYLOR_MIN_RATIO = 6.0  # gap(eps) / gap(eps/2); 4 would be merely quadratic
TAYLOR_EPS = (0.1, 0.05, 0.025)


def _log_structured(event: str, **kwargs: Any) -> None:
    """Log a structured JSON event for identity checks."""
    logger.info(json.dumps({"event": event, **kwargs}, default=str))


@dataclass(frozen=True)
class _Check:
    name: str
    description: str
    tolerance: float
    ssl: bool
    run: Callable[[np.random.Generator, int, int, float], float]


def _size(rng: np.random.Generator, max_alphabet: int) -> int:
    return int(rng.integers(2, max_alphabet + 1))


def _probability(rng: np.random.Generator, size: int) -> NDArray[np.float64]:
    raw = rng.dirichlet(np.ones(size)) + 1e-3
    return np.asarray(raw / raw.sum())


def _batch(rng: np.random.Generator, n: int | None = None) -> EmbeddingBatch:
    rows = int(rng.integers(2, 11)) if n is None else n
    d = int(rng.integers(1, 5))
    return EmbeddingBatch.of(rng.standard_normal((rows, d)), rng.standard_normal((rows, d)))


# --- discrete oracle ---


def _msc_dual(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        joint = random_joint(rng, _size(rng, max_alphabet), _size(rng, max_alphabet))
        weights = np.outer(joint.q_x, joint.q_z)
        value = float(np.sum(weights * (joint.probs / weights - 1.0) ** 2)) + delta
        spectral = float(np.sum(conditional_mean_svd(joint).singular_values[1:] ** 2))
        worst = max(worst, abs(value - spectral) / max(1.0, value))
    return worst


def _lancaster_tail(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        joint = random_joint(rng, _size(rng, max_alphabet), _size(rng, max_alphabet))
        d = int(rng.integers(1, min(joint.x_size, joint.z_size) + 1))
        r_d, tail = lancaster_truncate(joint, d)
        weights = np.outer(joint.q_x, joint.q_z)
        energy = float(np.sum(weights * (information_density(joint) - r_d) ** 2)) + delta
        worst = max(worst, abs(energy - tail))
    return worst


def _lancaster_reconstruction(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        joint = random_joint(rng, _size(rng, max_alphabet), _size(rng, max_alphabet))
        full = conditional_mean_svd(joint).reconstruct() + delta
        worst = max(worst, float(np.max(np.abs(full - information_density(joint)))))
    return worst


def _prompt_bias_bound(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        triple = random_triple(
            rng, _size(rng, max_alphabet), _size(rng, max_alphabet), _size(rng, max_alphabet)
        )
        prompt = random_prompt(rng, triple.y_size, triple.z_size)
        r = rng.uniform(-1.0, 1.0, triple.y_size)
        # passing P_{X,Z} explicitly skips the internal assertion; the bound is checked here
        report = predictors_and_bound(triple, prompt, r, pretrain=triple.xz_joint())
        rhs = 2.0 * report.prompt_bias + 2.0 * report.b_r**2 * report.residual_dependence
        worst = max(worst, max(0.0, report.lhs - rhs) + delta)
    return worst


def _shift_additive(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        size = _size(rng, max_alphabet)
        p, q = _probability(rng, size), _probability(rng, size)
        check = distribution_shift_check(p, q, rng.uniform(-1.0, 1.0, size))
        worst = max(worst, max(0.0, check.norm_p - check.additive_rhs) + delta)
    return worst


def _shift_multiplicative(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        size = _size(rng, max_alphabet)
        p, q = _probability(rng, size), _probability(rng, size)
        b_pq = likelihood_ratio_bound(p, q)
        check = distribution_shift_check(p, q, rng.uniform(-1.0, 1.0, size), b_pq=b_pq)
        worst = max(worst, max(0.0, check.norm_p - b_pq * check.norm_q) + delta)
    return worst


def _excess_risk(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        triple = random_triple(
            rng, _size(rng, max_alphabet), _size(rng, max_alphabet), _size(rng, max_alphabet)
        )
        posterior = class_posteriors(triple)
        noisy = posterior + rng.uniform(0.0, 0.5) * rng.standard_normal(posterior.shape)
        check = excess_risk_check(noisy, triple)
        worst = max(worst, max(0.0, check.lhs - check.rhs) + delta)
    return worst


def _ci_collapse(
    rng: np.random.Generator, count: int, max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        x_size, y_size, z_size = (_size(rng, max_alphabet) for _ in range(3))
        triple = ci_triple(
            _probability(rng, z_size),
            np.stack([_probability(rng, x_size) for _ in range(z_size)], axis=1),
            np.stack([_probability(rng, y_size) for _ in range(z_size)], axis=1),
        )
        r = rng.uniform(-1.0, 1.0, y_size)
        report = predictors_and_bound(triple, triple.yz_table(), r)
        worst = max(worst, float(np.max(np.abs(report.eta_rho - report.eta_star))) + delta)
    return worst


# --- ssl objectives ---


def _spectral_loop(
    rng: np.random.Generator, count: int, _max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        batch = _batch(rng)
        looped = spectral_contrastive_loss_loop(batch.a, batch.b) + delta
        worst = max(worst, abs(looped - float(spectral_contrastive_loss(batch))))
    return worst


def _vicreg_identity(
    rng: np.random.Generator, count: int, _max_alphabet: int, delta: float
) -> float:
    return max(float(vicreg_identity_gap(_batch(rng))) + delta for _ in range(count))


def _clip_single_pair(
    rng: np.random.Generator, count: int, _max_alphabet: int, delta: float
) -> float:
    return max(abs(float(clip_loss(_batch(rng, n=1))) + delta) for _ in range(count))


def _clip_zero_batch(
    rng: np.random.Generator, count: int, _max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        n, d = int(rng.integers(1, 11)), int(rng.integers(1, 5))
        zeros = EmbeddingBatch.of(np.zeros((n, d)), np.zeros((n, d)))
        worst = max(worst, abs(float(clip_loss(zeros)) + delta - math.log(n)))
    return worst


def _clip_rotation(
    rng: np.random.Generator, count: int, _max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        batch = _batch(rng)
        q, _r = np.linalg.qr(rng.standard_normal((batch.d, batch.d)))
        rotated = EmbeddingBatch.of(batch.a @ q, batch.b @ q)
        gap = abs(float(clip_loss(batch)) + delta - float(clip_loss(rotated)))
        worst = max(worst, gap)
    return worst


def _clip_taylor_order(
    rng: np.random.Generator, count: int, _max_alphabet: int, delta: float
) -> float:
    worst = 0.0
    for _ in range(count):
        batch = _batch(rng)
        gaps = [float(clip_taylor_gap(batch, eps=eps)) for eps in TAYLOR_EPS]
        for coarse, fine in zip(gaps, gaps[1:], strict=False):
            ratio = coarse / fine if fine > 0 else math.inf
            worst = max(worst, max(0.0, TAYLOR_MIN_RATIO - ratio) + delta)
    return worst


CHECKS: tuple[_Check, ...] = (
    _Check(
        name="msc_dual",
        description="MSC from (R-1)^2 equals the sum of squared non-trivial singular values",
        tolerance=IDENTITY_TOL,
        ssl=False,
        run=_msc_dual,
    ),
    _Check(
        name="lancaster_tail",
        description="Energy of R - R_d equals the singular-value tail",
        tolerance=IDENTITY_TOL,
        ssl=False,
        run=_lancaster_tail,
    ),
    _Check(
        name="lancaster_reconstruction",
        description="The full singular expansion reproduces R",
        tolerance=IDENTITY_TOL,
        ssl=False,
        run=_lancaster_reconstruction,
    ),
    _Check(
        name="prompt_bias_bound",
        description="||eta_rho - eta_*||^2 <= 2 bias + 2 B_r^2 residual dependence",
        tolerance=BOUND_TOL,
        ssl=False,
        run=_prompt_bias_bound,
    ),
    _Check(
        name="shift_additive",
        description="||eta||_p^2 <= ||eta||_q^2 + ||eta||_inf^2 TV(p, q)",
        tolerance=BOUND_TOL,
        ssl=False,
        run=_shift_additive,
    ),
    _Check(
        name="shift_multiplicative",
        description="||eta||_p^2 <= max(p/q) ||eta||_q^2",
        tolerance=BOUND_TOL,
        ssl=False,
        run=_shift_multiplicative,
    ),
    _Check(
        name="excess_risk",
        description="Excess 0-1 risk <= 2 sqrt(summed squared regression error)",
        tolerance=BOUND_TOL,
        ssl=False,
        run=_excess_risk,
    ),
    _Check(
        name="ci_collapse",
        description="eta_rho = eta_* when X and Y are independent given Z",
        tolerance=BOUND_TOL,
        ssl=False,
        run=_ci_collapse,
    ),
    _Check(
        name="spectral_contrastive_loop",
        description="Loop and vectorized spectral contrastive losses agree",
        tolerance=SSL_TOL,
        ssl=True,
        run=_spectral_loop,
    ),
    _Check(
        name="vicreg_identity",
        description="Invariance term equals the covariance-trace decomposition",
        tolerance=SSL_TOL,
        ssl=True,
        run=_vicreg_identity,
    ),
    _Check(
        name="clip_single_pair",
        description="CLIP loss of a single pair is zero",
        tolerance=SSL_TOL,
        ssl=True,
        run=_clip_single_pair,
    ),
    _Check(
        name="clip_zero_batch",
        description="CLIP loss of all-zero embeddings is log n",
        tolerance=SSL_TOL,
        ssl=True,
        run=_clip_zero_batch,
    ),
    _Check(
        name="clip_rotation",
        description="CLIP loss is invariant under a shared orthogonal rotation",
        tolerance=ROTATION_TOL,
        ssl=True,
        run=_clip_rotation,
    ),
    _Check(
        name="clip_taylor_order",
        description="CLIP Taylor gap shrinks faster than eps^2",
        tolerance=0.0,
        ssl=True,
        run=_clip_taylor_order,
    ),
)

CHECK_NAMES = tuple(c.name for c in CHECKS)


def run_identities(config: ExperimentConfig) -> IdentityReport:
    """Run every check of the battery under ``config.seed``.

    Raises:
        ConfigError: if ``identities.fault`` names no check.
    """
    s = config.identities
    if s.fault is not None and s.fault not in CHECK_NAMES:
        names = ", ".join(CHECK_NAMES)
        raise ConfigError(f"identities.fault: unknown check {s.fault!r}; expected one of {names}")

    _log_structured("experiment_start", command=str(config.kind), seed=config.seed, fault=s.fault)
    results = []
    for index, check in enumerate(CHECKS):
        count = s.ssl_batches if check.ssl else s.instances
        delta = FAULT_DELTA if check.name == s.fault else 0.0
        deviation = check.run(make_rng(config.seed, index), count, s.max_alphabet, delta)
        passed = deviation <= check.tolerance
        _log_structured("identity_check", name=check.name, passed=passed, max_deviation=deviation)
        results.append(
            IdentityCheck(
                name=check.name,
                description=check.description,
                instances=count,
                max_deviation=deviation,
                tolerance=check.tolerance,
                passed=passed,
            )
        )

    report = IdentityReport(
        artifact_version=__version__,
        seed=config.seed,
        fault=s.fault,
        checks=results,
        all_passed=all(c.passed for c in results),
    )
    _log_structured(
        "experiment_complete",
        command=str(config.kind),
        passed=sum(c.passed for c in results),
        failed=sum(not c.passed for c in results),
    )
    return report


def identity_report_schema() -> dict[str, Any]:
    """JSON schema of the identity report."""
    return IdentityReport.model_json_schema()


def save_report(report: IdentityReport, path: Path) -> None:
    """Write the identity report as JSON."""
    write_json(path, report.model_dump(mode="json"))
    logger.info("Identity report saved to %s", path)


def print_report(report: IdentityReport) -> None:
    """Print a human-readable identity report to stdout."""
    print(f"\n{'=' * 70}")
    print(f"Identity battery (seed {report.seed})")
    print(f"{'=' * 70}")
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(
            f"[{status}] {check.name:<28} max dev {check.max_deviation:.3e}"
            f"  tol {check.tolerance:.0e}  n={check.instances}"
        )
    print(f"\n{'=' * 70}\n")
