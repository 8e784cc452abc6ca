"""Routing attacks on Ethereum PoS: economics, simulation and validator mapping."""

__version__ = "0.1.0"
