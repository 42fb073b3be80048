"""Tests for JSON table documents."""

import json

import numpy as np
import pytest

from zeroshotlab.errors import DimensionMismatch, DomainError
from zeroshotlab.oracle.discrete import DiscreteJoint, DiscreteTriple, PromptTable, random_prompt
from zeroshotlab.oracle.tables import read_table, table_from_dict, table_to_dict, write_table


class TestTableFromDict:
    def test_triple(self):
        doc = {"x_size": 2, "y_size": 1, "z_size": 2, "probs": [0.1, 0.2, 0.3, 0.4]}
        table = table_from_dict(doc)
        assert isinstance(table, DiscreteTriple)
        assert table.probs.shape == (2, 1, 2)
        assert table.probs[1, 0, 0] == pytest.approx(0.3)

    def test_pair_and_prompt(self):
        assert isinstance(table_from_dict({"x_size": 2, "z_size": 2, "probs": [0.25] * 4}), DiscreteJoint)
        assert isinstance(table_from_dict({"y_size": 2, "z_size": 2, "probs": [0.25] * 4}), PromptTable)

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            table_from_dict({"x_size": 2, "z_size": 3, "probs": [0.25] * 4})

    def test_unnormalized(self):
        with pytest.raises(DomainError):
            table_from_dict({"x_size": 2, "z_size": 2, "probs": [0.5] * 4})


class TestReadWriteTable:
    def test_file_round_trip(self, tmp_path, rng):
        table = random_prompt(rng, 3, 4)
        path = tmp_path / "nested" / "prompt.json"
        write_table(table, path)
        loaded = read_table(path)
        assert isinstance(loaded, PromptTable)
        np.testing.assert_array_equal(loaded.probs, table.probs)

    def test_document_layout(self, tmp_path):
        joint = DiscreteJoint(np.array([[0.1, 0.2], [0.3, 0.4]]))
        path = tmp_path / "joint.json"
        write_table(joint, path)
        doc = json.loads(path.read_text())
        assert doc == {"x_size": 2, "z_size": 2, "probs": [0.1, 0.2, 0.3, 0.4]}
        assert table_to_dict(joint) == doc

    def test_leaves_no_temp_files(self, tmp_path):
        write_table(DiscreteJoint(np.full((2, 2), 0.25)), tmp_path / "t.json")
        assert list(tmp_path.glob("*.tmp")) == []
