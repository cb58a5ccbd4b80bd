"""Numerics for the Weil-Petersson geometry of a degenerating family of four-punctured spheres."""

__version__ = "0.1.0"
