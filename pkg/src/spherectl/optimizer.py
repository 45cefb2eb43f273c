"""Gradient descent with Barzilai-Borwein step sizes on the control grid."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from spherectl.diagnostics import control_bound, initial_speed, wellposedness_margin
from spherectl.dynamics import ModelParams, SwarmState
from spherectl.errors import ConfigError, IntegrationError
from spherectl.integrate import TimeGrid, zero_control
from spherectl.objective import CostBreakdown, cost_and_gradient, inner, weighted_norm

log = logging.getLogger(__name__)

TOL_REACHED = "tol-reached"
KMAX_REACHED = "k_max-reached"
STEP_FAILURE = "step-failure"


@dataclass(frozen=True)
class ControlProblem:
    order: int
    initial: SwarmState
    params: ModelParams
    renorm: bool = True

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigError("order", "must be 1 or 2")
        if self.params.has_omega:
            raise ConfigError("omega", "controlled problems require zero natural frequencies")
        if (self.order == 2) != (self.initial.v is not None):
            raise ConfigError("order", "initial state does not match the model order")


@dataclass(frozen=True)
class OptimizeConfig:
    tol: float = 1e-4
    k_max: int = 200
    alpha0: float = 1e-2
    alpha_min: float = 1e-6
    alpha_max: float = 1e2

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("tol", "must be > 0")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ConfigError("k_max", "must be an integer >= 1")
        if not 0 < self.alpha_min <= self.alpha0 <= self.alpha_max:
            raise ConfigError("alpha0", "need 0 < alpha_min <= alpha0 <= alpha_max")


@dataclass
class OptimizeReport:
    u_star: np.ndarray
    iterations: int
    best_iteration: int
    cost_history: list
    grad_norm_history: list
    step_history: list
    margin_history: list
    termination: str
    bb_fallbacks: int = 0
    warnings: list = field(default_factory=list)
    failed_u: Optional[np.ndarray] = None

    @property
    def best_cost(self) -> CostBreakdown:
        return self.cost_history[self.best_iteration]


def bb_raw_step(u_prev, u_cur, g_prev, g_cur, grid: TimeGrid):
    """<du, dg> / |dg|^2 in the weighted inner product; nan when dg vanishes."""
    du = u_cur - u_prev
    dg = g_cur - g_prev
    den = inner(dg, dg, grid)
    if den == 0.0:
        return math.nan
    return inner(du, dg, grid) / den


def bb_step(u_prev, u_cur, g_prev, g_cur, grid: TimeGrid, cfg: OptimizeConfig = OptimizeConfig()):
    """Barzilai-Borwein step length, clamped; falls back to ``alpha0`` on a non-positive or undefined value."""
    return _clamp(bb_raw_step(u_prev, u_cur, g_prev, g_cur, grid), cfg)


def _clamp(raw, cfg):
    if not (math.isfinite(raw) and raw > 0):
        return cfg.alpha0
    return min(max(raw, cfg.alpha_min), cfg.alpha_max)


def optimize(problem: ControlProblem, cfg: OptimizeConfig = OptimizeConfig()) -> OptimizeReport:
    params = problem.params
    grid = TimeGrid.from_params(params)
    order = problem.order
    V0 = initial_speed(problem.initial.v)
    warnings = []

    def evaluate(u):
        cost, grad, _, _ = cost_and_gradient(order, problem.initial, u, params, renorm=problem.renorm)
        margin = wellposedness_margin(params, V0, control_bound(u, grid)) if order == 2 else math.nan
        return cost, grad, margin

    u = zero_control(params)
    cost, grad, margin = evaluate(u)
    costs, gnorms, steps, margins = [cost], [weighted_norm(grad, grid)], [], [margin]
    if order == 2 and not margin < 1:
        warnings.append(f"well-posedness margin {margin:.4g} >= 1 at u=0; existence bound does not apply")
    best_k, best_u = 0, u
    fallbacks = 0
    u_prev = g_prev = None
    failed_u = None
    termination = KMAX_REACHED
    k = 0
    while True:
        if not gnorms[-1] > cfg.tol:
            termination = TOL_REACHED
            break
        if k >= cfg.k_max:
            termination = KMAX_REACHED
            break
        if u_prev is None:
            # no previous iterate yet: one plain gradient step bootstraps BB
            alpha = cfg.alpha0
        else:
            raw = bb_raw_step(u_prev, u, g_prev, grad, grid)
            if not (math.isfinite(raw) and raw > 0):
                fallbacks += 1
            alpha = _clamp(raw, cfg)
        u_next = u - alpha * grad
        try:
            cost_next, grad_next, margin_next = evaluate(u_next)
        except IntegrationError as exc:
            log.warning("forward solve failed at iteration %d: %s", k + 1, exc)
            failed_u = u_next
            termination = STEP_FAILURE
            break
        u_prev, g_prev = u, grad
        u, grad = u_next, grad_next
        k += 1
        costs.append(cost_next)
        gnorms.append(weighted_norm(grad, grid))
        steps.append(alpha)
        margins.append(margin_next)
        if cost_next.total < costs[best_k].total:
            best_k, best_u = k, u
        log.debug("iter %d cost %.6g |g| %.3g alpha %.3g", k, cost_next.total, gnorms[-1], alpha)

    return OptimizeReport(
        u_star=best_u,
        iterations=k,
        best_iteration=best_k,
        cost_history=costs,
        grad_norm_history=gnorms,
        step_history=steps,
        margin_history=margins,
        termination=termination,
        bb_fallbacks=fallbacks,
        warnings=warnings,
        failed_u=failed_u,
    )
