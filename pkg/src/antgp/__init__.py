"""Genetic programming for the memory-augmented artificial ant, with adaptive parameter control."""

__version__ = "0.1.0"
