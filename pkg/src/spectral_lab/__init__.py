"""Numerical laboratory for spectral inequalities of confined Schroedinger operators."""

__version__ = "0.1.0"
