"""Spectral simulation of the damped stochastic wave equation on [0, J] and
its weakly self-avoiding polymer measure."""

__version__ = "0.1.0"
