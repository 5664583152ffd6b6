"""Compressive recovery of graph signals on perturbed graphs."""

__version__ = "0.1.0"
