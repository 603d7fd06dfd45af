"""Thermodynamically audited spectral simulation of a viscoelastic fluid with stress diffusion."""

__version__ = "0.1.0"
