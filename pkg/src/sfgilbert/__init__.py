"""Simulation and analysis toolkit for scale-free Gilbert graphs on the torus."""

__version__ = "0.1.0"
