"""Escape paths, pseudo-potentials and phase boundaries of the two-photon-driven Kerr oscillator."""
__version__ = "0.1.0"
