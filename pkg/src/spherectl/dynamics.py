"""Vector fields of the swarm-sphere models and of their costate equations.

Every right-hand side accepts arrays with arbitrary leading batch axes, shape
``(..., N, d)``; the particle axis is ``-2``.  Divisions by ``|x_i|^2`` are
kept literally so the fields stay well defined slightly off the sphere.

The costate fields are the transposed Jacobians of exactly these forward
fields (including the ``1/|x_i|^2`` factors) plus the gradient of the
running cost ``(1/N) sum_i |x_i - xbar|^2``.  Compared with the printed
optimality system this means:

* the coupling term carries ``<x_i, x_j> p_i`` (not ``p_j``) in the
  first-order equation;
* the running-cost source is ``(2/N)(x_i - xbar)``;
* the control gradient uses the tangent projection ``p - <p,x>x`` in both
  model orders.

These forms are the ones confirmed by the finite-difference gradient check.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from spherectl.errors import ConfigError


@dataclass(frozen=True)
class ModelParams:
    N: int
    d: int
    kappa: float = 0.5
    m: float = 1.0
    gamma: float = 1.0
    lam: float = 0.1
    T: float = 4.0
    dt: float = 0.01
    omega: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("N", "must be an integer >= 1")
        if int(self.d) != self.d or self.d < 2:
            raise ConfigError("d", "must be an integer >= 2")
        if not self.kappa >= 0:
            raise ConfigError("kappa", "must be >= 0")
        if not self.m > 0:
            raise ConfigError("m", "must be > 0")
        if not self.gamma >= 0:
            raise ConfigError("gamma", "must be >= 0")
        if not self.lam > 0:
            raise ConfigError("lambda", "must be > 0")
        if not self.T > 0:
            raise ConfigError("T", "must be > 0")
        if not 0 < self.dt <= self.T:
            raise ConfigError("dt", "must satisfy 0 < dt <= T")
        K = round(self.T / self.dt)
        if abs(K * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError("dt", "T/dt must be an integer")
        if self.omega is not None:
            om = np.asarray(self.omega, dtype=float)
            if om.shape != (self.N, self.d, self.d):
                raise ConfigError("omega", f"expected shape {(self.N, self.d, self.d)}, got {om.shape}")
            if np.max(np.abs(om + np.swapaxes(om, -1, -2)), initial=0.0) > 1e-12:
                raise ConfigError("omega", "matrices must be skew-symmetric")
            object.__setattr__(self, "omega", om)

    @property
    def steps(self):
        return round(self.T / self.dt)

    @cached_property
    def has_omega(self):
        return self.omega is not None and bool(np.any(self.omega != 0))


@dataclass(frozen=True)
class SwarmState:
    """Positions (and velocities for the second-order model) of N particles."""

    x: np.ndarray
    v: Optional[np.ndarray] = None

    @property
    def order(self):
        return 1 if self.v is None else 2

    @property
    def N(self):
        return self.x.shape[-2]

    def drift(self):
        """(max | |x_i| - 1 |, max |<x_i, v_i>|)."""
        nd = float(np.max(np.abs(np.linalg.norm(self.x, axis=-1) - 1.0)))
        td = 0.0 if self.v is None else float(np.max(np.abs(np.sum(self.x * self.v, axis=-1))))
        return nd, td


def _dot(a, b):
    return (a * b).sum(axis=-1, keepdims=True)


def _check(params, *arrays):
    for a in arrays:
        if a.shape[-2:] != (params.N, params.d):
            raise ValueError(f"expected trailing shape {(params.N, params.d)}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def _coupling(x, r, s):
    # sum_k (x_k - <x_i,x_k>/r_i x_i) with s = sum_k x_k
    return s - (_dot(x, s) / r) * x


def _rotation(x, omega):
    return np.einsum("nij,...nj->...ni", omega, x)


def first_order_rhs(x, u, params):
    """dx_i/dt = Omega_i x_i + (kappa/N) sum_k (x_k - <x_i,x_k> x_i) + P(x_i) u_i."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check(params, x, u)
    return first_order_field(x, u, params)


def first_order_field(x, u, params):
    """Unchecked kernel of ``first_order_rhs`` for the integrator's inner loop."""
    r = _dot(x, x)
    s = x.sum(axis=-2, keepdims=True)
    out = (params.kappa / params.N) * _coupling(x, r, s) + u - (_dot(u, x) / r) * x
    if params.has_omega:
        out = out + _rotation(x, params.omega)
    return out


def second_order_rhs(x, v, u, params):
    """Returns (dx/dt, dv/dt) of the inertial model with friction and control."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    _check(params, x, v, u)
    return second_order_field(x, v, u, params)


def second_order_field(x, v, u, params):
    r = _dot(x, x)
    s = x.sum(axis=-2, keepdims=True)
    dv = (
        -(_dot(v, v) / r) * x
        - (params.gamma / params.m) * v
        + (params.kappa / (params.m * params.N)) * _coupling(x, r, s)
        + u
        - (_dot(u, x) / r) * x
    )
    if params.has_omega:
        dv = dv + _rotation(x, params.omega) / params.m
    return v, dv


def _projection_vjp(c, x, r, w):
    # gradient in x of <c, <w,x>/r x>, w held fixed
    cx = _dot(c, x)
    wx = _dot(w, x)
    return (w * cx + c * wx) / r - (2.0 * wx * cx / r**2) * x


def _coupling_vjp(c, x, r, s):
    """Gradient in x_j of sum_i <c_i, sum_k (x_k - <x_i,x_k>/r_i x_i)>."""
    total_c = c.sum(axis=-2, keepdims=True)
    radial = ((_dot(c, x) / r) * x).sum(axis=-2, keepdims=True)
    return total_c - _projection_vjp(c, x, r, s) - radial


def running_cost_gradient(x, N):
    """Gradient of (1/N) sum_i |x_i - xbar|^2 with respect to x_j."""
    xbar = x.mean(axis=-2, keepdims=True)
    return (2.0 / N) * (x - xbar)


def first_order_adjoint_rhs(p, x, u, params):
    """-dp/dt for the first-order problem (the costate equation read backward in time)."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check(params, p, x, u)
    return first_order_adjoint_field(p, x, u, params)


def first_order_adjoint_field(p, x, u, params):
    r = _dot(x, x)
    s = x.sum(axis=-2, keepdims=True)
    return (
        (params.kappa / params.N) * _coupling_vjp(p, x, r, s)
        - _projection_vjp(p, x, r, u)
        + running_cost_gradient(x, params.N)
    )


def second_order_adjoint_rhs(p, q, x, v, u, params):
    """Returns (-dp/dt, -dq/dt) for the second-order problem."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    _check(params, p, q, x, v, u)
    return second_order_adjoint_field(p, q, x, v, u, params)


def second_order_adjoint_field(p, q, x, v, u, params):
    r = _dot(x, x)
    s = x.sum(axis=-2, keepdims=True)
    qx = _dot(q, x)
    vv = _dot(v, v)
    minus_pdot = (
        -vv * (q / r - (2.0 * qx / r**2) * x)
        + (params.kappa / (params.m * params.N)) * _coupling_vjp(q, x, r, s)
        - _projection_vjp(q, x, r, u)
        + running_cost_gradient(x, params.N)
    )
    minus_qdot = p - (2.0 * qx / r) * v - (params.gamma / params.m) * q
    return minus_pdot, minus_qdot
