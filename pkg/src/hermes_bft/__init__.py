"""Hermes BFT: committee-relayed consensus, simulator and harness."""

__version__ = "0.1.0"
