"""Behavior-level toolkit for epitome-based CNNs on PIM crossbar accelerators."""

__version__ = "0.1.0"
