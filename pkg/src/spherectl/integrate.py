"""Fixed-step RK4 on a uniform time grid, forward for states and backward for costates.

Controls live on the grid nodes and are interpolated linearly in between, so
the RK4 stages of step k see ``u_k``, ``(u_k + u_{k+1})/2`` and ``u_{k+1}``.
The backward pass uses the same control values and linearly interpolated
states at the half steps.

Arrays may carry leading batch axes in front of ``(K+1, N, d)``; the
finite-difference oracle relies on this to run all perturbations at once.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from spherectl import dynamics as dyn
from spherectl.dynamics import ModelParams, SwarmState
from spherectl.errors import IntegrationError

NORM_BAND = (0.5, 1.5)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    @classmethod
    def from_params(cls, params: ModelParams):
        return cls(T=float(params.T), K=params.steps)

    @property
    def dt(self):
        return self.T / self.K

    @property
    def nodes(self):
        # indexed, not accumulated: t_K == T exactly
        return self.T * np.arange(self.K + 1) / self.K

    @property
    def weights(self):
        """Trapezoidal quadrature weights times dt, one per node."""
        w = np.full(self.K + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True)
class Trajectory:
    """Node values of a forward solve.

    ``x`` and ``v`` have shape (..., K+1, N, d).  ``norm_drift`` and
    ``tangency_drift`` are the largest raw deviations observed after each RK4
    step, before renormalization.
    """

    grid: TimeGrid
    x: np.ndarray
    v: Optional[np.ndarray]
    norm_drift: float
    tangency_drift: float

    @property
    def order(self):
        return 1 if self.v is None else 2

    def state(self, k):
        return SwarmState(self.x[..., k, :, :], None if self.v is None else self.v[..., k, :, :])


@dataclass(frozen=True)
class AdjointTrajectory:
    grid: TimeGrid
    p: np.ndarray
    q: Optional[np.ndarray]

    @property
    def costate(self):
        """The costate that multiplies the control: p (first order) or q (second order)."""
        return self.p if self.q is None else self.q


def zero_control(params, batch=()):
    return np.zeros(tuple(batch) + (params.steps + 1, params.N, params.d))


def _rk4(f, y, h, stages):
    """One classical RK4 step for a tuple state; ``stages`` = (start, mid, end) data."""
    a, b, c = stages
    k1 = f(y, a)
    k2 = f(tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k1)), b)
    k3 = f(tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k2)), b)
    k4 = f(tuple(yi + h * ki for yi, ki in zip(y, k3)), c)
    return tuple(yi + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4) for yi, d1, d2, d3, d4 in zip(y, k1, k2, k3, k4))


def _check_control(u, params):
    u = np.asarray(u, dtype=float)
    if u.shape[-3:] != (params.steps + 1, params.N, params.d):
        raise ValueError(f"control grid must have trailing shape {(params.steps + 1, params.N, params.d)}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("control grid has non-finite entries")
    return u


def integrate_forward(order, initial: SwarmState, u, params: ModelParams, renorm=True, initial_tol=1e-10):
    """Solve the state equation on [0, T] with classical RK4.

    ``initial_tol`` bounds the accepted deviation of the initial data from the
    sphere and from tangency; tests that start deliberately off tangency pass
    ``initial_tol=None``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    u = _check_control(u, params)
    grid = TimeGrid.from_params(params)
    h = grid.dt
    batch = u.shape[:-3]
    x0 = np.broadcast_to(np.asarray(initial.x, dtype=float), batch + (params.N, params.d))
    if order == 2:
        if initial.v is None:
            raise ValueError("second-order integration needs initial velocities")
        v0 = np.broadcast_to(np.asarray(initial.v, dtype=float), x0.shape)
    if initial_tol is not None:
        nd, td = SwarmState(x0, v0 if order == 2 else None).drift()
        if nd > initial_tol or td > initial_tol:
            raise ValueError(f"initial state off the manifold: norm drift {nd:.3g}, tangency drift {td:.3g}")

    xs = np.empty(batch + (grid.K + 1, params.N, params.d))
    xs[..., 0, :, :] = x0
    vs = None
    if order == 1:
        y = (x0.copy(),)

        def f(y, uu):
            return (dyn.first_order_field(y[0], uu, params),)
    else:
        vs = np.empty_like(xs)
        vs[..., 0, :, :] = v0
        y = (x0.copy(), v0.copy())

        def f(y, uu):
            return dyn.second_order_field(y[0], y[1], uu, params)

    norm_drift = tangency_drift = 0.0
    lo, hi = NORM_BAND
    for k in range(grid.K):
        u0 = u[..., k, :, :]
        u1 = u[..., k + 1, :, :]
        y = _rk4(f, y, h, (u0, 0.5 * (u0 + u1), u1))
        norms = np.sqrt((y[0] * y[0]).sum(axis=-1))
        if order == 2 and not np.isfinite(y[1]).all():
            raise IntegrationError("non-finite state", step=k + 1)
        # NaN norms fail both comparisons, so test the complement of the band
        if not ((norms >= lo) & (norms <= hi)).all():
            if not np.isfinite(norms).all():
                raise IntegrationError("non-finite state", step=k + 1)
            raise IntegrationError("particle norm left [1/2, 3/2]", step=k + 1)
        norm_drift = max(norm_drift, float(np.abs(norms - 1.0).max()))
        if order == 2:
            tangency_drift = max(tangency_drift, float(np.abs((y[0] * y[1]).sum(axis=-1)).max()))
        if renorm:
            xn = y[0] / norms[..., None]
            if order == 1:
                y = (xn,)
            else:
                y = (xn, y[1] - (y[1] * xn).sum(axis=-1, keepdims=True) * xn)
        xs[..., k + 1, :, :] = y[0]
        if order == 2:
            vs[..., k + 1, :, :] = y[1]
    return Trajectory(grid=grid, x=xs, v=vs, norm_drift=norm_drift, tangency_drift=tangency_drift)


def integrate_adjoint_backward(order, traj: Trajectory, u, params: ModelParams):
    """Solve the costate equation from zero terminal data at T back to 0."""
    u = _check_control(u, params)
    grid = traj.grid
    if grid.K != params.steps:
        raise ValueError("trajectory and parameters use different grids")
    h = grid.dt
    xs, vs = traj.x, traj.v
    p = np.zeros(xs.shape)
    q = np.zeros(xs.shape) if order == 2 else None

    if order == 1:

        def f(y, data):
            x, uu = data
            return (dyn.first_order_adjoint_field(y[0], x, uu, params),)
    else:

        def f(y, data):
            x, v, uu = data
            return dyn.second_order_adjoint_field(y[0], y[1], x, v, uu, params)

    y = tuple(np.zeros(xs.shape[:-3] + xs.shape[-2:]) for _ in range(order))
    for k in range(grid.K - 1, -1, -1):
        # reversed time: the step runs from node k+1 down to node k
        xa, xb = xs[..., k + 1, :, :], xs[..., k, :, :]
        ua, ub = u[..., k + 1, :, :], u[..., k, :, :]
        if order == 1:
            stages = ((xa, ua), (0.5 * (xa + xb), 0.5 * (ua + ub)), (xb, ub))
        else:
            va, vb = vs[..., k + 1, :, :], vs[..., k, :, :]
            stages = ((xa, va, ua), (0.5 * (xa + xb), 0.5 * (va + vb), 0.5 * (ua + ub)), (xb, vb, ub))
        y = _rk4(f, y, h, stages)
        if not all(np.isfinite(yi).all() for yi in y):
            raise IntegrationError("non-finite costate", step=k)
        p[..., k, :, :] = y[0]
        if order == 2:
            q[..., k, :, :] = y[1]
    return AdjointTrajectory(grid=grid, p=p, q=q)
