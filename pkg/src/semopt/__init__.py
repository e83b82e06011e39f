"""Constraint-driven semantic query optimization toolkit."""

__version__ = "0.1.0"
