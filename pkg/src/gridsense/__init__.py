"""Ambient-data estimation of the dynamic state Jacobian and system state matrix."""

__version__ = "0.1.0"
