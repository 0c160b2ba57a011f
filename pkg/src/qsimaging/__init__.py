"""Photon-level Monte Carlo simulation of quantum-secured imaging and
entanglement-based secure ranging."""

__version__ = "0.1.0"
