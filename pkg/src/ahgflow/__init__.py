"""Lattice simulator for the self-dual abelian Higgs gradient flow on a periodic torus."""

from .lattice import FieldState, Grid, make_grid, make_state, vacuum

__version__ = "0.1.0"

__all__ = ["FieldState", "Grid", "make_grid", "make_state", "vacuum", "__version__"]
