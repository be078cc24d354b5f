"""Saturation-aware multi-channel vegetation-index regression toolkit."""

__version__ = "0.1.0"
