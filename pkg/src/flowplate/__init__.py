"""Discrete operator laboratory for linearized compressible flow coupled to a clamped plate."""
from .grid import BoxDomain, Grid, build_grid, classify_boundary
from .ambient import AmbientFlow, make_channel_flow, make_swirl_flow, make_zero_flow, make_flow, div_sup
from .diffops import FluidParams

__version__ = "0.1.0"

__all__ = [
    "AmbientFlow", "BoxDomain", "FluidParams", "Grid", "build_grid", "classify_boundary",
    "div_sup", "make_channel_flow", "make_flow", "make_swirl_flow", "make_zero_flow",
]
