"""Adaptive-horizon MPC with power-series terminal costs."""

__version__ = "0.1.0"
