"""Stochastic-process simulation toolkit: stable Levy paths and branching
processes, random-tree maps, multiplicative-chaos random walks, and the
closed-form envelopes their exponents are checked against."""

__version__ = "0.1.0"

__all__ = ["__version__"]
