"""Micro-batch stream-processing simulator with adaptive batch-interval control."""

__version__ = "0.1.0"
