"""JSONL run logger for tracking per-cell experiment timings."""

import json
from datetime import UTC, datetime
from pathlib import Path
from typing import Any


class RunLogger:
    """Appends one JSON line per finished sweep cell."""

    def __init__(self, log_path: Path) -> None:
        """Initialize the run logger.

        Args:
            log_path: Path to the JSONL log file.
        """
        self.log_path = log_path
        self.log_path.parent.mkdir(parents=True, exist_ok=True)

    def log_cell(
        self,
        command: str,
        cell: dict[str, Any],
        rows: int,
        wall_time_s: float,
        config_hash: str,
    ) -> None:
        """Log a finished cell.

        Args:
            command: CLI subcommand that ran the cell.
            cell: Grid coordinates of the cell (e.g. theta and replicate).
            rows: Number of result rows the cell produced.
            wall_time_s: Wall time of the cell in seconds.
            config_hash: Hash of the validated config.
        """
        entry = {
            "timestamp": datetime.now(UTC).isoformat(),
            "command": command,
            "cell": cell,
            "rows": rows,
            "wall_time_s": round(wall_time_s, 4),
            "config_hash": config_hash,
        }

        with self.log_path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(entry, sort_keys=True) + "\n")

    def recent(self, limit: int = 100) -> list[dict[str, Any]]:
        """Get recent log entries, most recent first."""
        if not self.log_path.exists():
            return []

        entries = []
        with self.log_path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    try:
                        entries.append(json.loads(line))
                    except json.JSONDecodeError:
                        continue

        return list(reversed(entries[-limit:]))

    def stats(self) -> dict[str, Any]:
        """Aggregate cell counts and wall time per command."""
        entries = self.recent(limit=100000)
        per_command: dict[str, dict[str, float]] = {}
        for entry in entries:
            command = str(entry.get("command", "unknown"))
            bucket = per_command.setdefault(command, {"cells": 0, "wall_time_s": 0.0})
            bucket["cells"] += 1
            bucket["wall_time_s"] += float(entry.get("wall_time_s", 0.0))

        total_time = sum(b["wall_time_s"] for b in per_command.values())
        return {
            "total_cells": len(entries),
            "total_wall_time_s": round(total_time, 4),
            "per_command": {
                name: {
                    "cells": int(b["cells"]),
                    "avg_wall_time_s": round(b["wall_time_s"] / b["cells"], 4),
                }
                for name, b in sorted(per_command.items())
            },
        }
