"""Nonisotropic spectral-ball geometry and decay rates of degenerate oscillatory integrals."""

__version__ = "0.1.0"
