"""Influence diagnostics for generalized linear models."""

__version__ = "0.1.0"
