"""Singular surfaces with bounded integral curvature."""

__version__ = "0.1.0"
