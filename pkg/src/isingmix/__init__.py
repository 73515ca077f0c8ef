"""Estimation and efficiency theory for Gaussian mixtures with Ising labels."""

__version__ = "0.1.0"
