"""Synthetic power-quality disturbance waveforms and a numpy 1-D CNN classifier."""

__version__ = "0.1.0"
