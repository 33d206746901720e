"""DoA-informed GEV beamforming with filterbank power-ratio masks."""

__version__ = "0.1.0"
