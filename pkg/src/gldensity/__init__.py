"""Lattice toolkit for degenerate Ginzburg-Landau energies with rough coefficients."""

__version__ = "0.1.0"
