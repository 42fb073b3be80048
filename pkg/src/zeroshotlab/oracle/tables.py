"""JSON documents for discrete tables.

Format: ``{"x_size": n, "y_size": m, "z_size": k, "probs": [...]}`` with ``probs``
flattened row-major. Pair tables omit ``y_size``; prompt tables omit ``x_size``.
"""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from zeroshotlab.errors import DimensionMismatch
from zeroshotlab.eval.persistence import atomic_write_text
from zeroshotlab.oracle.discrete import DiscreteJoint, DiscreteTriple, PromptTable

logger = logging.getLogger(__name__)

Table = DiscreteJoint | DiscreteTriple | PromptTable


def table_from_dict(doc: dict[str, Any]) -> Table:
    """Build the table a JSON document describes."""
    probs = np.asarray(doc["probs"], dtype=np.float64)
    has_x, has_y = "x_size" in doc, "y_size" in doc
    if has_x and has_y:
        shape: tuple[int, ...] = (int(doc["x_size"]), int(doc["y_size"]), int(doc["z_size"]))
    elif has_x:
        shape = (int(doc["x_size"]), int(doc["z_size"]))
    else:
        shape = (int(doc["y_size"]), int(doc["z_size"]))
    if probs.size != int(np.prod(shape)):
        raise DimensionMismatch(f"{probs.size} probabilities do not fill a table of shape {shape}")
    probs = probs.reshape(shape)
    if has_x and has_y:
        return DiscreteTriple(probs)
    if has_x:
        return DiscreteJoint(probs)
    return PromptTable(probs)


def table_to_dict(table: Table) -> dict[str, Any]:
    """JSON-ready document for ``table``."""
    doc: dict[str, Any] = {}
    if isinstance(table, DiscreteTriple):
        doc.update(x_size=table.x_size, y_size=table.y_size, z_size=table.z_size)
    elif isinstance(table, DiscreteJoint):
        doc.update(x_size=table.x_size, z_size=table.z_size)
    else:
        doc.update(y_size=table.y_size, z_size=table.z_size)
    doc["probs"] = [float(v) for v in table.probs.ravel()]
    return doc


def read_table(path: Path) -> Table:
    """Load a table from a JSON file."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    table = table_from_dict(doc)
    logger.debug("Loaded %s of shape %s from %s", type(table).__name__, table.probs.shape, path)
    return table


def write_table(table: Table, path: Path) -> None:
    """Write ``table`` as JSON (atomically)."""
    atomic_write_text(path, json.dumps(table_to_dict(table), indent=2) + "\n")
