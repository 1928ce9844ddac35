"""Numerical laboratory for the self-similar fragmentation equation."""

__version__ = "0.1.0"
