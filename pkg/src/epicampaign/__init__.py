"""Optimal campaigning resource allocation over time and degree classes."""

__version__ = "0.1.0"
