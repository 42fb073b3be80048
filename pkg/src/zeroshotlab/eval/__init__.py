"""Experiment harness: sweeps, identity battery and persistence."""
