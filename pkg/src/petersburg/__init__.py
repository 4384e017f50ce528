"""Truncated and discounted Petersburg games: samplers, limit laws, checks."""

__version__ = "0.1.0"
