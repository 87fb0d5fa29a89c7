"""Propensity-partitioned patchwork kriging for heterogeneous treatment effects."""

__version__ = "0.1.0"
