"""Numerical laboratory for recovering the nonlinear coefficient of 1D NLS."""

from ._accel import BACKEND
from .spectral_core import Field, Grid, ProbeSpec, gaussian_probe, make_grid
from .nls_solver import Coefficient, NonlinearitySpec, SolverConfig, evolve

__all__ = ["BACKEND", "Field", "Grid", "ProbeSpec", "gaussian_probe", "make_grid",
           "Coefficient", "NonlinearitySpec", "SolverConfig", "evolve"]
__version__ = "0.1.0"
