"""Degenerate double-characteristic hyperbolic SPDE: kernel, transforms and random fields."""

__version__ = "0.1.0"
