"""Uncertain plant, cost functional and uncertainty structure."""
