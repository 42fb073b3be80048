"""Shared test fixtures."""

import numpy as np
import pytest

from zeroshotlab.oracle.discrete import DiscreteTriple, random_triple
from zeroshotlab.rng import make_rng
from zeroshotlab.simulation.gaussian import GaussianThetaModel


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234)


@pytest.fixture
def small_triple(rng) -> DiscreteTriple:
    """Strictly positive 3 x 2 x 4 triple."""
    return random_triple(rng, 3, 2, 4)


@pytest.fixture
def gaussian_model() -> GaussianThetaModel:
    return GaussianThetaModel(d=2, a=5.0, b=6.0, theta=0.5, p=0.5)


@pytest.fixture
def isolated_settings(tmp_path, monkeypatch):
    """Point the lab's data path at ``tmp_path`` and clear env overrides."""
    for name in (
        "THREADS",
        "LOG_LEVEL",
        "RUN_LOG_PATH",
        "BANDWIDTH_SCALE",
        "DEPENDENCE_LAMBDA",
        "PROMPT_BIAS_MC_DRAWS",
    ):
        monkeypatch.delenv(f"ZEROSHOTLAB_{name}", raising=False)
    monkeypatch.setenv("ZEROSHOTLAB_DATA_PATH", str(tmp_path / "data"))
    return tmp_path
