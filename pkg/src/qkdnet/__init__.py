"""Topology evaluation for trusted-relay QKD networks."""

__version__ = "0.1.0"
