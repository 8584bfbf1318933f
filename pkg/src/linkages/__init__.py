"""Matched asymptotics and direct solvers for delayed renewal dynamics."""

from .errors import LinkagesError
from .grids import GridFunction
from .kernels import KernelDensity
from .polynomials import PolyFunction

__version__ = "0.1.0"

__all__ = ["LinkagesError", "GridFunction", "KernelDensity", "PolyFunction",
           "__version__"]
