"""Decoherence-activated entanglement and non-Gaussianity criteria for two dephasing qubits."""

__version__ = "0.1.0"
