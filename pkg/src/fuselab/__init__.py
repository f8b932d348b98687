"""Hierarchical mixed-input Gaussian-process emulation for LPBF process design."""

__version__ = "0.1.0"
