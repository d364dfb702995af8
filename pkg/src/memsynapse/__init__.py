"""Simulation and analysis toolkit for a current-controlled 3T1R memristive synapse."""

__version__ = "0.1.0"
