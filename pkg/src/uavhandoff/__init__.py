"""Cooperative two-UAV marine tracking: handoff protocol, geometry, ORB matching and metrics."""

__version__ = "0.1.0"
