"""Infoprop model-based rollouts."""

__version__ = "0.1.0"
