"""Concept-bottleneck node classification for text-attributed graphs."""

__version__ = "0.1.0"
