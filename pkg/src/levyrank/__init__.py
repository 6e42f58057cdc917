"""Simulation and stability analysis for competing Lévy particles."""
__version__ = "0.1.0"
