"""Numerical laboratory for interaction Morawetz estimates of defocusing NLS."""

__version__ = "0.1.0"
