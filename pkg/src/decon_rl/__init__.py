"""Deconfounding actor-critic toolkit: confounded data, sequential latent model, do-rewards."""

__version__ = "0.1.0"
