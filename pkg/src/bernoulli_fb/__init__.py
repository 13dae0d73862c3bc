"""Measure-constrained Dirichlet-energy minimization on Cartesian grids and
the optimal Bernoulli constant of linear contact data."""

__version__ = "0.1.0"
