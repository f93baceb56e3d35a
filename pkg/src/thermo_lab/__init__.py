"""Finite-difference laboratory for 1D nonlinear thermoelasticity with rough data."""

from .diagnostics import DiagnosticsRecord, StabilizationReport, build_report, estimate_theta_infinity
from .initial_data import RoughDatumSpec, make_rough_datum, mollify
from .mesh import Grid, State, build_grid
from .model import EntropyTransform, make_material_law, regularize
from .solver import BlowUpError, SolverError, Trajectory, integrate

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "DiagnosticsRecord", "EntropyTransform", "Grid", "RoughDatumSpec",
    "SolverError", "StabilizationReport", "State", "Trajectory", "build_grid",
    "build_report", "estimate_theta_infinity", "integrate", "make_material_law",
    "make_rough_datum", "mollify", "regularize",
]
