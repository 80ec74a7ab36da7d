"""Simulation of a three-wave-mixing rf-SQUID traveling-wave parametric amplifier."""

from .physics import PHI0, BiasPoint, LineSpec, LoadingProfile, SquidParams

__version__ = "0.1.0"

__all__ = ["PHI0", "BiasPoint", "LineSpec", "LoadingProfile", "SquidParams", "__version__"]
