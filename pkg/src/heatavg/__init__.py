"""Averaging principle for the stochastic heat equation driven by a stochastic measure."""

__version__ = "0.1.0"
