"""Per-mode pseudospectral solver and diagnostics for scalar transport by a translating shear."""

from .core import FlowParams, Grid, ScaledParams, SpectralField, sobolev_norm
from .solver import SolverConfig, Trajectory, exact_inviscid, solve, strang_step

__all__ = [
    "FlowParams",
    "Grid",
    "ScaledParams",
    "SpectralField",
    "SolverConfig",
    "Trajectory",
    "exact_inviscid",
    "solve",
    "sobolev_norm",
    "strang_step",
]

__version__ = "0.1.0"
