"""Reachability and invariance analysis for mixed-monotone systems with disturbances."""

__version__ = "0.1.0"
