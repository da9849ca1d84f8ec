"""Tensor regression with a partially observed response."""

__version__ = "0.1.0"
