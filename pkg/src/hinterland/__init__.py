"""Equilibrium urban systems on additively weighted Voronoi commuting areas."""

from .errors import HinterlandError

__version__ = "0.1.0"

__all__ = ["HinterlandError", "__version__"]
