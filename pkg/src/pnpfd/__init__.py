"""Finite-difference Poisson-Nernst-Planck solver with TR-BDF2 time stepping."""

__version__ = "0.1.0"
