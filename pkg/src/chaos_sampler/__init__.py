"""Boson-sampling probes of integrable and chaotic random-matrix dynamics."""

__version__ = "0.1.0"
