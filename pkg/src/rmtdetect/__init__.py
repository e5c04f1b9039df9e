"""Random-matrix spectral event detection for multichannel time series."""

__version__ = "0.1.0"
