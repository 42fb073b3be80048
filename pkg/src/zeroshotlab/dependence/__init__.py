"""Dependence measures and rate calculators."""
