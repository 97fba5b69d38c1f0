"""Numerics for the critical two-dimensional delta-Bose gas semigroups."""

__version__ = "0.1.0"
