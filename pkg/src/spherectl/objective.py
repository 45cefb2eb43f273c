"""Cost functional, adjoint gradient and the finite-difference oracle.

Gradients are expressed in the discrete L^2 inner product

    <a, b> = sum_k w_k sum_i <a_i(t_k), b_i(t_k)>

where ``w_k`` are the trapezoidal weights times dt (see ``TimeGrid.weights``).
In that inner product the gradient of the cost at an interior node k is, to
second order in dt, the continuous gradient (2 lambda / N) u + P(x) c
evaluated at t_k.
"""

from dataclasses import dataclass

import numpy as np

from spherectl.dynamics import ModelParams, SwarmState
from spherectl.geometry import tangent_project
from spherectl.integrate import TimeGrid, Trajectory, integrate_forward, integrate_adjoint_backward


@dataclass(frozen=True)
class CostBreakdown:
    tracking: float
    energy: float

    @property
    def total(self):
        return self.tracking + self.energy


def _variance(z):
    zbar = np.mean(z, axis=-2, keepdims=True)
    return np.mean(np.sum((z - zbar) ** 2, axis=-1), axis=-1)


def position_variance(state):
    """(1/N) sum_i |x_i - xbar|^2. Accepts a SwarmState or a raw (..., N, d) array."""
    x = state.x if isinstance(state, SwarmState) else np.asarray(state)
    return _variance(x)


def velocity_variance(state):
    v = state.v if isinstance(state, SwarmState) else np.asarray(state)
    if v is None:
        raise ValueError("velocity variance needs a second-order state")
    return _variance(v)


def _trapezoid(grid, values):
    # values has the time axis last
    return values @ grid.weights


def evaluate_cost(traj: Trajectory, u, params: ModelParams):
    """Trapezoidal quadrature of both cost terms.

    Batched trajectories give array-valued fields.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-3:] != traj.x.shape[-3:]:
        raise ValueError("control grid and trajectory shapes differ")
    tracking = _trapezoid(traj.grid, position_variance(traj.x))
    energy = params.lam * _trapezoid(traj.grid, np.mean(np.sum(u * u, axis=-1), axis=-1))
    if np.ndim(tracking) == 0:
        return CostBreakdown(float(tracking), float(energy))
    return CostBreakdown(tracking, energy)


def pmp_control(costate, x, params: ModelParams):
    """Pointwise minimizer of the Hamiltonian: -(N / 2 lambda) P(x_j) c_j."""
    if not params.lam > 0:
        raise ValueError("lambda must be > 0")
    return -(params.N / (2.0 * params.lam)) * tangent_project(x, costate)


def assemble_gradient(u, traj: Trajectory, adj, params: ModelParams):
    u = np.asarray(u, dtype=float)
    c = adj.costate
    if not (u.shape == traj.x.shape == c.shape):
        raise ValueError(f"shape mismatch: u {u.shape}, x {traj.x.shape}, costate {c.shape}")
    g = tangent_project(traj.x, c)
    # Boundary nodes carry half-hat basis functions: the weighted average of a
    # linear g over [t_0, t_1] is (2 g_0 + g_1)/3, and symmetrically at t_K.
    # Using the bare node value there costs O(dt) against the oracle.
    g[..., 0, :, :] = (2.0 * g[..., 0, :, :] + g[..., 1, :, :]) / 3.0
    g[..., -1, :, :] = (2.0 * g[..., -1, :, :] + g[..., -2, :, :]) / 3.0
    return (2.0 * params.lam / params.N) * u + g


def inner(a, b, grid: TimeGrid):
    """dt-weighted trapezoidal inner product of two control-shaped grids."""
    return float(np.sum(grid.weights[:, None, None] * a * b))


def weighted_norm(a, grid: TimeGrid):
    return float(np.sqrt(inner(a, a, grid)))


def cost_and_gradient(order, initial, u, params, renorm=True):
    """Forward solve, backward solve and gradient in one call."""
    traj = integrate_forward(order, initial, u, params, renorm=renorm)
    adj = integrate_adjoint_backward(order, traj, u, params)
    return evaluate_cost(traj, u, params), assemble_gradient(u, traj, adj, params), traj, adj


def sample_coordinates(shape, n, seed):
    """Seeded subsample of at most ``n`` flat indices into a control grid."""
    size = int(np.prod(shape))
    rng = np.random.Generator(np.random.PCG64(seed))
    if size <= n:
        return np.arange(size)
    return np.sort(rng.choice(size, size=n, replace=False))


def finite_difference_gradient(order, initial, params, u, eps=1e-5, indices=None, renorm=True, batch_size=1024):
    """Central-difference gradient of the discrete cost.

    Each coordinate is perturbed by +-eps; the cost difference is divided by
    ``2 eps w_k`` so the result lives in the same weighted inner product as
    ``assemble_gradient``.  With ``indices`` only those flat coordinates are
    computed and a 1-D array is returned; otherwise the full grid.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    u = np.asarray(u, dtype=float)
    grid = TimeGrid.from_params(params)
    full = indices is None
    idx = np.arange(u.size) if full else np.asarray(indices)
    node = np.unravel_index(idx, u.shape)[0]
    out = np.empty(len(idx))
    flat = u.reshape(-1)
    for start in range(0, len(idx), batch_size // 2):
        chunk = idx[start:start + batch_size // 2]
        n = len(chunk)
        pert = np.broadcast_to(flat, (2 * n, flat.size)).copy()
        rows = np.arange(n)
        pert[rows, chunk] += eps
        pert[n + rows, chunk] -= eps
        batch_u = pert.reshape((2 * n,) + u.shape)
        traj = integrate_forward(order, initial, batch_u, params, renorm=renorm)
        total = evaluate_cost(traj, batch_u, params).total
        if not np.all(np.isfinite(total)):
            raise FloatingPointError("non-finite cost under perturbation")
        out[start:start + n] = (total[:n] - total[n:]) / (2.0 * eps * grid.weights[node[start:start + n]])
    return out.reshape(u.shape) if full else out


@dataclass(frozen=True)
class GradientCheck:
    relative_error: float
    indices: np.ndarray
    adjoint: np.ndarray
    oracle: np.ndarray
    threshold: float

    @property
    def passed(self):
        return bool(self.relative_error <= self.threshold)


def gradient_check(order, initial, params, u, eps=1e-5, n_coords=500, seed=0, threshold=1e-3, flip_sign=False, renorm=True):
    """Relative weighted L^2 error between the adjoint gradient and the oracle.

    ``flip_sign`` negates the adjoint gradient; it exists to show that the
    check can fail.
    """
    _, grad, _, _ = cost_and_gradient(order, initial, u, params, renorm=renorm)
    if flip_sign:
        grad = -grad
    idx = sample_coordinates(grad.shape, n_coords, seed)
    fd = finite_difference_gradient(order, initial, params, u, eps=eps, indices=idx, renorm=renorm)
    adj = grad.reshape(-1)[idx]
    w = TimeGrid.from_params(params).weights[np.unravel_index(idx, grad.shape)[0]]
    den = np.sqrt(np.sum(w * fd**2))
    num = np.sqrt(np.sum(w * (adj - fd) ** 2))
    rel = float(num / den) if den > 0 else float(num)
    return GradientCheck(relative_error=rel, indices=idx, adjoint=adj, oracle=fd, threshold=threshold)


def probe_control(params: ModelParams, seed, modes=3):
    """Smooth seeded control for gradient checks.

    A constant plus ``modes`` sine/cosine pairs over [0, T] with Gaussian
    coefficients, so the check exercises a generic but time-regular control
    like the iterates the optimizer produces.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    t = TimeGrid.from_params(params).nodes
    basis = [np.ones_like(t)]
    for j in range(1, modes + 1):
        basis += [np.sin(2 * np.pi * j * t / params.T), np.cos(2 * np.pi * j * t / params.T)]
    coef = rng.standard_normal((len(basis), params.N, params.d))
    return np.einsum("jt,jnd->tnd", np.array(basis), coef) / np.sqrt(modes)
