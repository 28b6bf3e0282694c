"""Desk-scale multi-object navigation: simulator, map memories, agents, metrics."""

__version__ = "0.1.0"
