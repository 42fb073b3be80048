"""Tests for seeded generators."""

import numpy as np
import pytest

from zeroshotlab.rng import make_rng, replicate_seed


class TestMakeRng:
    def test_same_seed_same_draws(self):
        np.testing.assert_array_equal(make_rng(7).random(5), make_rng(7).random(5))

    def test_streams_differ(self):
        assert not np.array_equal(make_rng(7, 0).random(5), make_rng(7, 1).random(5))

    def test_seeds_differ(self):
        assert not np.array_equal(make_rng(7).random(5), make_rng(8).random(5))

    def test_uses_philox(self):
        assert isinstance(make_rng(0).bit_generator, np.random.Philox)

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            make_rng(-1)


class TestReplicateSeed:
    def test_replicate_zero_is_base(self):
        assert replicate_seed(42, 0) == 42

    def test_distinct_per_replicate(self):
        assert len({replicate_seed(42, i) for i in range(16)}) == 16
