"""Discretization of continuous frames into uniformly discrete frames."""

__version__ = "0.1.0"
