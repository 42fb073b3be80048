"""CLI entry point for experiments: python -m zeroshotlab.eval <command>"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from zeroshotlab.config import get_settings
from zeroshotlab.errors import ConfigError, ZeroShotLabError
from zeroshotlab.eval.harness import (
    default_config_path,
    load_config,
    print_summary,
    run_sweep,
    save_result,
)
from zeroshotlab.eval.identities import CHECK_NAMES, print_report, run_identities, save_report
from zeroshotlab.logging.run_logger import RunLogger
from zeroshotlab.models import ExperimentKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def _log_structured(event: str, **kwargs: Any) -> None:
    """Log a structured JSON event for CLI milestones."""
    logger.info(json.dumps({"event": event, **kwargs}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zeroshotlab", description="Zero-shot prediction experiments"
    )
    parser.add_argument("command", choices=[str(k) for k in ExperimentKind])
    parser.add_argument("--config", type=Path, help="JSON or YAML config (default: shipped)")
    parser.add_argument("--seed", type=int, help="Base seed")
    parser.add_argument("--out", type=Path, help="Output file (CSV, or JSON for identities)")
    parser.add_argument("--threads", type=int, help="Worker threads")
    parser.add_argument("--replicates", type=int, help="Replicates per grid cell")
    parser.add_argument("--run-log", type=Path, help="Append per-cell timings to this JSONL file")
    parser.add_argument(
        "--fault",
        choices=CHECK_NAMES,
        help="identities only: perturb one check to exercise failure reporting",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": args.command}
    for name in ("seed", "out", "threads", "replicates"):
        value = getattr(args, name)
        if value is not None:
            out[name] = value
    return out


def run(argv: list[str] | None = None) -> int:
    """Run one CLI command and return its exit status."""
    args = build_parser().parse_args(argv)
    settings = get_settings()

    level = getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    kind = ExperimentKind(args.command)
    config_path = args.config or default_config_path(kind)
    overrides = _overrides(args)
    if args.threads is None:
        overrides.setdefault("threads", settings.threads)

    try:
        config = load_config(config_path, overrides)
        if args.fault is not None:
            if kind is not ExperimentKind.IDENTITIES:
                raise ConfigError("--fault: only valid for the identities command")
            config = config.model_copy(
                update={"identities": config.identities.model_copy(update={"fault": args.fault})}
            )
    except ConfigError as e:
        print(f"Error: invalid config {config_path}:\n{e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    suffix = ".json" if kind is ExperimentKind.IDENTITIES else ".csv"
    out = config.out or Path(settings.data_path) / f"{kind}{suffix}"
    run_log_path = args.run_log or settings.run_log_path
    run_logger = RunLogger(run_log_path) if run_log_path is not None else None

    try:
        if kind is ExperimentKind.IDENTITIES:
            report = run_identities(config)
            print_report(report)
            save_report(report, out)
            print(f"Report saved to {out}")
            return EXIT_OK if report.all_passed else EXIT_CHECK_FAILED

        result = run_sweep(config, run_logger)
        print_summary(result)
        save_result(result, config, out)
        print(f"Results saved to {out}")
        if result.predictions is not None:
            print(f"Predictions saved to {config.prompt_compare.predictions_out}")
        if run_logger is not None:
            _log_structured("run_log_stats", path=str(run_logger.log_path), **run_logger.stats())
        return EXIT_OK
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ZeroShotLabError as e:
        logger.error("Experiment FAILED: %s", e)
        _log_structured("experiment_failed", command=str(kind), error=str(e))
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except Exception as e:
        logger.error("Experiment FAILED: %s", e)
        _log_structured("experiment_failed", command=str(kind), error=str(e))
        raise


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
