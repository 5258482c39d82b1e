"""Guaranteed cost control synthesis for discrete-time systems with structured uncertainty."""

__version__ = "0.3.0"
