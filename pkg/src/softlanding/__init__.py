"""Soft-landing feedforward control of a single-coil reluctance actuator."""

__version__ = "0.1.0"
