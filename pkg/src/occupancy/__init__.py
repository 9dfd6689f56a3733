"""Room occupancy estimation from audio."""

__version__ = "0.1.0"
