"""Regularized n-conformal heat flow simulator and invariant checks."""

__version__ = "0.1.0"
