"""Generalized interference alignment for stochastic MIMO wireless-tap networks."""

__version__ = "0.1.0"
