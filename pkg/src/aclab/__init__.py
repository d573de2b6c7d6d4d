"""Numerical verification toolkit for layered Allen-Cahn steady states in the plane."""

__version__ = "0.1.0"
