"""Active learning of NHPP reliability parameters under partial-coverage diagnostic tests."""

__version__ = "0.1.0"
