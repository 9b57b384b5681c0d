"""Numerical verification of Finsler connection axioms via truncated Taylor jets."""

__version__ = "0.1.0"
