"""Spectral hierarchy tools for quantum graphs."""

__version__ = "0.1.0"
