"""Time-inhomogeneous Markov chains solved as ordered products of matrix exponentials."""

__version__ = "0.1.0"
