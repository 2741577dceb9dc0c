"""Numerical checks for gradient-field models on periodic lattices."""

__version__ = "0.1.0"
