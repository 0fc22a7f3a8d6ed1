"""Extremal attribution masks from an area-conditioned implicit neural representation."""

__version__ = "0.1.0"
