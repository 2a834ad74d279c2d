"""Rescaled zero-range process, porous medium equation and rate functionals."""

__version__ = "0.1.0"
