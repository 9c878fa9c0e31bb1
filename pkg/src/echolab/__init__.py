"""Echoes, quantum revivals and revival echoes of wavepackets in a weakly anharmonic trap."""

__version__ = "0.1.0"
