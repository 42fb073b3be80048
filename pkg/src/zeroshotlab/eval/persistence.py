"""CSV, JSON and sidecar writers for experiment outputs.

Files are written atomically (temp file in the target directory, then
``os.replace``) so an interrupted sweep never leaves a half-written table behind.
Floats are rendered with 17 significant digits, which round-trips every double.
"""

import contextlib
import hashlib
import json
import logging
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from zeroshotlab import __version__

logger = logging.getLogger(__name__)

Cell = str | int | float | bool | None


def atomic_write_text(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` using an atomic replace."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, str(path))
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp_path)
        raise


def format_cell(value: Cell) -> str:
    """Render one CSV cell; floats with 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    text = str(value)
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Cell]]) -> str:
    """CSV text with a header row and '\\n' line endings."""
    lines = [",".join(header)]
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise ValueError(f"row has {len(row)} cells, header has {width}")
        lines.append(",".join(format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def config_hash(config: BaseModel) -> str:
    """sha256 of the canonical JSON form of a validated config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Cell]],
    *,
    config: BaseModel,
    seed: int,
    command: str,
    summary: dict[str, Any] | None = None,
) -> Path:
    """Write a CSV table plus its ``.meta.json`` sidecar.

    Returns:
        Path of the sidecar.
    """
    atomic_write_text(path, render_csv(header, rows))
    meta = {
        "artifact_version": __version__,
        "columns": list(header),
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "summary": summary or {},
    }
    meta_path = sidecar_path(path)
    write_json(meta_path, meta)
    logger.info("Results saved to %s", path)
    return meta_path


def write_json(path: Path, payload: Any) -> None:
    """Write a JSON document with sorted keys (atomically)."""
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
