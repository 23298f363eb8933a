"""Weighted sum-rate maximization for multicell MISO downlink."""
__version__ = "0.1.0"
