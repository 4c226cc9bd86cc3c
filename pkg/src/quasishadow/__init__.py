"""Quantitative toolkit for nonuniformly partially hyperbolic torus maps."""

__version__ = "0.1.0"
