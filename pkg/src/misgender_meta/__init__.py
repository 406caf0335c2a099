"""Measurement toolkit for comparing probability- and generation-based misgendering evaluations."""

__version__ = "0.1.0"
