"""Collision maps, non-perturbative response and Kubo's formula for a system hit by a 1D particle."""

__version__ = "0.1.0"
