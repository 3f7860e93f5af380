"""Numerical analysis of the Nose-Hoover and Moore-Spiegel oscillators."""

from .fields import SphericalDirection, SystemKind, SystemParams

__all__ = ["SphericalDirection", "SystemKind", "SystemParams"]
__version__ = "0.1.0"
