"""Primitives on the unit sphere S^{d-1} embedded in R^d.

All functions broadcast over leading axes; the last axis is the ambient
dimension d.

Random initial data is drawn from numpy's PCG64 generator.  Each particle
gets its own sub-stream, seeded by ``SeedSequence(seed, spawn_key=(purpose, i))``
where ``purpose`` separates positions, velocities and natural frequencies and
``i`` is the particle index.  Gaussians come from the Box-Muller transform of
uniform draws, so the sequence of generator calls is fixed and platform
independent.
"""

import numpy as np

from spherectl.errors import ConfigError

DEGENERATE_NORM = 1e-8
RENORM_MIN_NORM = 0.5

# sub-stream purposes
STREAM_SPHERE = 0
STREAM_TANGENT = 1
STREAM_OMEGA = 2


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def tangent_project(x, u):
    """Remove the component of ``u`` along ``x``: ``u - <u,x>/|x|^2 x``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    r = _dot(x, x)
    if np.any(r < DEGENERATE_NORM**2):
        raise ValueError("degenerate base point: |x| < 1e-8")
    return u - (_dot(u, x) / r) * x


def particle_stream(seed, index, purpose):
    """Generator for one particle's sub-stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def gaussian(rng, d):
    """``d`` standard normals via Box-Muller on uniform draws."""
    pairs = (d + 1) // 2
    u = rng.random((pairs, 2))
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    return z[:d]


def _nonzero_gaussian(rng, d):
    while True:
        g = gaussian(rng, d)
        if np.any(g != 0.0):
            return g


def sample_sphere(seed, N, d):
    """N unit vectors in R^d, normalized independent Gaussian draws.

    Returns an array of shape (N, d).
    """
    if N < 1:
        raise ConfigError("N", "must be >= 1")
    if d < 2:
        raise ConfigError("d", "must be >= 2")
    out = np.empty((N, d))
    for i in range(N):
        g = _nonzero_gaussian(particle_stream(seed, i, STREAM_SPHERE), d)
        out[i] = g / np.linalg.norm(g)
    return out


def sample_tangent(seed, x, scale, index=0):
    """A tangent vector at unit ``x`` with norm ``scale`` and random direction.

    ``index`` selects the particle sub-stream so that a swarm can draw one
    independent velocity per particle from a single seed.
    """
    x = np.asarray(x, dtype=float)
    if scale < 0:
        raise ConfigError("scale", "must be >= 0")
    if scale == 0:
        return np.zeros_like(x)
    rng = particle_stream(seed, index, STREAM_TANGENT)
    while True:
        w = tangent_project(x, gaussian(rng, x.shape[-1]))
        n = np.linalg.norm(w)
        if n > 1e-12:
            w = w / n
            # one more projection keeps <w, x> at round-off level after scaling
            w = tangent_project(x, w)
            return scale * w / np.linalg.norm(w)


def renormalize(x, v=None):
    """Pull ``x`` back onto the sphere and ``v`` onto its tangent space.

    Raises ValueError when some ``|x| <= 1/2``: the state has left the
    neighborhood in which the model represents the sphere system.
    """
    x = np.asarray(x, dtype=float)
    norm = np.sqrt(_dot(x, x))
    if np.any(norm <= RENORM_MIN_NORM):
        raise ValueError("state left the sphere neighborhood: |x| <= 1/2")
    x = x / norm
    if v is None:
        return x, None
    v = np.asarray(v, dtype=float)
    return x, v - _dot(v, x) * x


def random_skew(seed, N, d, scale):
    """N skew-symmetric d x d matrices with Gaussian entries times ``scale``."""
    out = np.zeros((N, d, d))
    if scale == 0:
        return out
    for i in range(N):
        a = gaussian(particle_stream(seed, i, STREAM_OMEGA), d * d).reshape(d, d)
        out[i] = scale * 0.5 * (a - a.T)
    return out
