"""Optimal truncated sequential schemes for joint detection and estimation."""

__version__ = "0.1.0"
