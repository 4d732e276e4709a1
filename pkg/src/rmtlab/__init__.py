"""Numerical laboratory for eigenvalue rigidity in one-cut unitary ensembles."""

__version__ = "0.1.0"
