"""Cooperative output regulation of discrete-time multi-agent systems with input delays.

Submodules
----------
topology
    Leader-follower networks and the H matrix.
spectral
    Delay lifting, Schur tests and characteristic-polynomial roots.
observer
    Gain intervals for the distributed leader observer.
regulator
    Delay regulator equations.
synthesis
    Solvability audit and controller assembly.
simulation
    Lockstep closed-loop simulation and convergence metrics.
scenario, fixtures
    Configuration documents and built-in scenarios.
cli
    The ``coopreg`` command.
"""

from .exceptions import (
    AssumptionViolation,
    CoopregError,
    DesignError,
    IdentityViolation,
    NumericalError,
    RegulatorError,
    SimulationDiverged,
    ValidationError,
)
from .observer import mu_interval, naive_observer_feasibility, observer_matrix, pick_mu
from .plant import AgentPlant
from .regulator import composite_exo, solve_regulator
from .scenario import Scenario, SimulationSettings, load_scenario, parse_scenario
from .simulation import convergence_metrics, error_coordinates, run
from .spectral import DelaySystem, char_poly_roots, is_schur, lift, spectral_radius
from .synthesis import ControllerRealization, audit_assumptions, synthesize
from .topology import Network, build_h_matrix, check_connectivity

__version__ = "0.1.0"

__all__ = [
    "AgentPlant",
    "AssumptionViolation",
    "ControllerRealization",
    "CoopregError",
    "DelaySystem",
    "DesignError",
    "IdentityViolation",
    "Network",
    "NumericalError",
    "RegulatorError",
    "Scenario",
    "SimulationDiverged",
    "SimulationSettings",
    "ValidationError",
    "audit_assumptions",
    "build_h_matrix",
    "char_poly_roots",
    "check_connectivity",
    "composite_exo",
    "convergence_metrics",
    "error_coordinates",
    "is_schur",
    "lift",
    "load_scenario",
    "mu_interval",
    "naive_observer_feasibility",
    "observer_matrix",
    "parse_scenario",
    "pick_mu",
    "run",
    "solve_regulator",
    "spectral_radius",
    "synthesize",
]
