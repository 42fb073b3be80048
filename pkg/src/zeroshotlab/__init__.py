"""zeroshotlab: a numerical lab for zero-shot prediction theory."""

__version__ = "0.1.0"
