"""Numerical laboratory for isometric immersions of negatively curved surfaces."""

__version__ = "0.1.0"
