"""EOAM: offline emergency lane-change tables and the closed-loop avoidance runtime."""

__version__ = "1.0.0"
