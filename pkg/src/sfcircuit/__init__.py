"""Superfluid oscillator circuit: GPE solver, analytic laws and regulated LC model."""

__version__ = "0.1.0"
