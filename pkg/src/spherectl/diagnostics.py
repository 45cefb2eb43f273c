"""Numerical checks of the a priori guarantees for the controlled second-order model."""

import math
from dataclasses import dataclass, asdict

import numpy as np

from spherectl.dynamics import ModelParams
from spherectl.integrate import Trajectory


@dataclass(frozen=True)
class InvariantReport:
    max_norm_drift: float
    max_tangency_drift: float
    max_speed: float
    control_bound_M: float

    def as_dict(self):
        return asdict(self)


def control_bound(u, grid):
    """max_i of the dt-weighted L^2 norm of u_i over [0, T]."""
    u = np.asarray(u, dtype=float)
    per_particle = np.einsum("k,kn->n", grid.weights, np.sum(u * u, axis=-1))
    return float(np.sqrt(np.max(per_particle)))


def check_invariants(traj: Trajectory, u) -> InvariantReport:
    x = traj.x
    norm_drift = float(np.max(np.abs(np.linalg.norm(x, axis=-1) - 1.0)))
    if traj.v is None:
        tangency, speed = 0.0, 0.0
    else:
        tangency = float(np.max(np.abs(np.sum(x * traj.v, axis=-1))))
        speed = float(np.max(np.linalg.norm(traj.v, axis=-1)))
    return InvariantReport(
        max_norm_drift=norm_drift,
        max_tangency_drift=tangency,
        max_speed=speed,
        control_bound_M=control_bound(u, traj.grid),
    )


def _bracket(params, V0, M):
    return V0 + 2.0 * params.kappa * params.T / params.m + 2.0 * M * math.sqrt(params.T)


def wellposedness_margin(params: ModelParams, V0, M):
    """(m/gamma)(V0 + 2 kappa T/m + 2 M sqrt(T))(exp(gamma T/m) - 1).

    Global existence is guaranteed when the value is below 1.  Without
    friction the bound says nothing and ``math.inf`` is returned.
    """
    if not params.gamma > 0:
        return math.inf
    rate = params.gamma * params.T / params.m
    return (params.m / params.gamma) * _bracket(params, V0, M) * math.expm1(rate)


def velocity_bound_cv(params: ModelParams, V0, M):
    """A priori bound on sup_t max_i |v_i(t)|; only defined when the margin is below 1."""
    margin = wellposedness_margin(params, V0, M)
    if not margin < 1.0:
        raise ValueError(f"well-posedness margin {margin:.6g} >= 1: velocity bound undefined")
    return math.exp(params.gamma * params.T / params.m) * _bracket(params, V0, M) / (1.0 - margin)


def initial_speed(v0):
    return 0.0 if v0 is None else float(np.max(np.linalg.norm(v0, axis=-1)))
