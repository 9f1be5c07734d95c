"""Solvers for linear-quadratic extended mean field games with common noise."""
from __future__ import annotations

from .model import (ConfigError, GeneralSpec, LQSpec, NonlinearMap, ScalarCoefficient,
                    SimConfig, SpaceGrid, SpecValidationError, TimeGrid, load_spec)
from .reduction import RhoMap, invert_rho, lq_to_general
from .riccati import RiccatiSolution, solve_riccati
from .phi_field import MasterField, PhiField, eval_U, master_residual, solve_phi

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "GeneralSpec", "LQSpec", "NonlinearMap", "ScalarCoefficient",
    "SimConfig", "SpaceGrid", "SpecValidationError", "TimeGrid", "load_spec",
    "RhoMap", "invert_rho", "lq_to_general", "RiccatiSolution", "solve_riccati",
    "MasterField", "PhiField", "eval_U", "master_residual", "solve_phi",
]
