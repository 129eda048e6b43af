"""Leakage functions, an ideal function-revealing encryption oracle, and learning experiments on top of it."""

__version__ = "0.1.0"
