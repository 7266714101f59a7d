"""Discrete fractional Dirichlet forms, norms and self-improvement probes on periodic lattices."""

__version__ = "0.1.0"
