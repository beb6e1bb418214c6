"""Bayesian velocity estimation on a hexagonal lattice with a temporal-coherence prior."""
