"""Compressible barotropic flow solver with vanishing-viscosity diagnostics."""

from .grids import CHANNEL, TORUS, BoundaryTrace, Grid, ScalarField, TensorField, VectorField
from .solver import BcSpec, RunConfig, SolverBlowupError, State, Trajectory, run, step
from .thermo import GasModel

__version__ = "0.1.0"

__all__ = [
    "BcSpec",
    "BoundaryTrace",
    "CHANNEL",
    "GasModel",
    "Grid",
    "RunConfig",
    "ScalarField",
    "SolverBlowupError",
    "State",
    "TensorField",
    "TORUS",
    "Trajectory",
    "VectorField",
    "run",
    "step",
    "__version__",
]
