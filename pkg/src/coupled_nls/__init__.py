"""Normalized solutions of coupled nonlinear Schrodinger systems on radial grids."""

from .grid import Field, RadialGrid, build_grid
from .model import KappaProfile, ModelParams, State

__all__ = ["Field", "RadialGrid", "build_grid", "KappaProfile", "ModelParams", "State"]
__version__ = "0.1.0"
