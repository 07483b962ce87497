# tfqkd/__init__.py
"""Finite-key analysis and simulation for sending-or-not-sending twin-field QKD."""

__version__ = "1.0.0"
