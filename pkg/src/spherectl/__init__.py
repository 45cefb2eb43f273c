"""Optimal consensus control for swarm-sphere (Kuramoto-type) models on S^{d-1}."""

from spherectl.dynamics import ModelParams, SwarmState
from spherectl.integrate import TimeGrid, Trajectory, AdjointTrajectory, integrate_forward, integrate_adjoint_backward
from spherectl.objective import CostBreakdown, evaluate_cost, assemble_gradient
from spherectl.optimizer import ControlProblem, OptimizeConfig, OptimizeReport, optimize

__all__ = [
    "ModelParams",
    "SwarmState",
    "TimeGrid",
    "Trajectory",
    "AdjointTrajectory",
    "integrate_forward",
    "integrate_adjoint_backward",
    "CostBreakdown",
    "evaluate_cost",
    "assemble_gradient",
    "ControlProblem",
    "OptimizeConfig",
    "OptimizeReport",
    "optimize",
]

__version__ = "0.1.0"
