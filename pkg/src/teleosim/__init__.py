"""Deterministic teleoperation simulator for a shared-control telepresence robot."""

__version__ = "0.1.0"
