"""Equilibrium measures of the log energy with a mass constraint on a curve."""

__version__ = "0.1.0"
