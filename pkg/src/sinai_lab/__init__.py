"""Exact and Monte Carlo laboratory for Sinai's walk and derived 2D models."""

from .env import Environment, EnvironmentSpec, make_environment

__version__ = "0.1.0"

__all__ = ["Environment", "EnvironmentSpec", "make_environment", "__version__"]
