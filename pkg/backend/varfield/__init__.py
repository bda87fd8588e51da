"""Symbolic variational calculus on jet bundles."""

__version__ = "0.1.0"
