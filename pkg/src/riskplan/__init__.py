"""Chance-constrained multi-vehicle path planning with risk allocation."""

__version__ = "0.1.0"
