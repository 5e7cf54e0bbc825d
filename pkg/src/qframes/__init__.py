"""Simulator for a polarization BB84 + decoy link synchronized by quantum frames."""

__version__ = "0.1.0"
