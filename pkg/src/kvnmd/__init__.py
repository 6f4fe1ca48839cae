"""Koopman-von Neumann molecular dynamics on phase-space grids."""
__version__ = "0.1.0"
