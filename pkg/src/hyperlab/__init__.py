"""Pseudo-spectral lab for advection-hyperdiffusion with closed-form bound oracles."""

__version__ = "0.1.0"
