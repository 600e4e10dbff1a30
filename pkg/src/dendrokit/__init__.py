"""Exact combinatorics of rooted trees, equivariant tree shapes,
truncated presheaves on tree categories, and colored operads."""

__version__ = "0.1.0"
