"""Explicit graph-based multi-part object discovery."""

__version__ = "0.1.0"
