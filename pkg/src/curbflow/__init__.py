"""Spatial parking equilibria, optima, pricing and planning for mixed AV/HV corridors."""

__version__ = "0.1.0"
