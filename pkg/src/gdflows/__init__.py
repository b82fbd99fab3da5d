"""Scattering transform, canonical variables and commuting flows for n-th order scalar operators."""

__version__ = "0.1.0"
