"""Quantum k-nearest-neighbour image classification on a statevector simulator."""

__version__ = "0.1.0"
