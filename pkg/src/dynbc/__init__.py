"""Simulator and verification toolkit for the semilinear heat equation with dynamical boundary condition."""

from .discretization import Mesh, Operators, assemble_operators, build_interval_mesh, build_mesh, build_rect_mesh, trace
from .energy import dual_norm, energy, energy_gradient, energy_hessian, h1_norm, l2_norms, lp_norms
from .equilibrium import (
    EquilibriumRecord,
    check_critical_point,
    hessian_min_eig,
    minimize_energy,
    neumann_lift,
    robin_lift,
    solve_stationary,
)
from .estimators import GradientFlow, LojasiewiczEstimator, StationarySolver
from .exceptions import ConfigurationError, DynBCError, NumericalError, StepFailure
from .flow import FlowConfig, TrajectoryRecord, dissipation_check, run_trajectory
from .lojasiewicz import LojasiewiczFit, convergence_certificate, estimate_theta, finite_length_check, ls_lhs
from .model import ModelSpec, Nonlinearity, check_F2, check_F3, compute_lambda
from .scenario import Scenario, make_initial, parse_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "assemble_operators",
    "build_interval_mesh",
    "build_mesh",
    "build_rect_mesh",
    "check_critical_point",
    "check_F2",
    "check_F3",
    "compute_lambda",
    "ConfigurationError",
    "convergence_certificate",
    "dissipation_check",
    "dual_norm",
    "DynBCError",
    "energy",
    "energy_gradient",
    "energy_hessian",
    "EquilibriumRecord",
    "estimate_theta",
    "finite_length_check",
    "FlowConfig",
    "GradientFlow",
    "h1_norm",
    "hessian_min_eig",
    "l2_norms",
    "LojasiewiczEstimator",
    "LojasiewiczFit",
    "lp_norms",
    "ls_lhs",
    "make_initial",
    "Mesh",
    "minimize_energy",
    "ModelSpec",
    "neumann_lift",
    "Nonlinearity",
    "NumericalError",
    "Operators",
    "parse_scenario",
    "robin_lift",
    "run_scenario",
    "run_trajectory",
    "Scenario",
    "solve_stationary",
    "StationarySolver",
    "StepFailure",
    "trace",
    "TrajectoryRecord",
]
