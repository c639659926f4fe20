"""Degenerate parametric oscillator with a squeezed vacuum reservoir: closed forms, Fock oracle and Langevin ensembles."""

__version__ = "0.1.0"
