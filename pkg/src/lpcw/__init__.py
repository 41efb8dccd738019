"""Curie-Weiss model on the l^p sphere: samplers, Hubbard-Stratonovich
machinery, Monte Carlo estimators and variational free energies."""

__version__ = "0.1.0"
