"""Logging modules for run tracking."""

from zeroshotlab.logging.run_logger import RunLogger

__all__ = ["RunLogger"]
