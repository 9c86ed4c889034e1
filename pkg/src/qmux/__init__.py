"""Simulator and protocol engine for entangled-photon time transfer and key distribution on one link."""

__version__ = "0.1.0"
