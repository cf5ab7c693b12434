"""Kerr-squeezed atom laser numerical laboratory."""

__version__ = "0.1.0"
