"""Simulation of remote entanglement between two qubits over a multimode line."""

__version__ = "0.1.0"
