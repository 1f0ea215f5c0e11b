"""Contextual stochastic optimization with kernel weights, variance regularization and robust reweighting."""

__version__ = "0.1.0"
