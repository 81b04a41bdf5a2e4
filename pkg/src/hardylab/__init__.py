"""Truncated Hardy-space laboratory for intertwining analytic Toeplitz operators."""

__version__ = "0.1.0"
