"""Uncertainty-aware sampling-based trajectory planning on predicted BEV grids."""

__version__ = "0.1.0"
