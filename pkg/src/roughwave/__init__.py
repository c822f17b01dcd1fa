"""Simulation and verification toolkit for the 1d wave equation with
multiplicative rough spatial noise (Hurst index between 1/4 and 1/2)."""

__version__ = "0.1.0"

from .hilbert import HurstParams, make_params  # noqa: F401
