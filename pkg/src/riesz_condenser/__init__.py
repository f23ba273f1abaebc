"""Constrained Gauss variational problem for two-plate Riesz condensers."""
__version__ = "0.1.0"
