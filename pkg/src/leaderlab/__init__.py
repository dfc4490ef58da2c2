"""Simulation and verification toolkit for the leadership problem of Gaussian particles."""

__version__ = "0.1.0"
