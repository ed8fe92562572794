"""Cone-constrained ground states on domains of double and triple revolution."""

__version__ = "0.1.0"
