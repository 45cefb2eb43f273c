"""Run configuration: a flat ``key = value`` text file plus command-line overrides."""

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from spherectl.dynamics import ModelParams, SwarmState
from spherectl.errors import ConfigError
from spherectl.geometry import random_skew, sample_sphere, sample_tangent
from spherectl.optimizer import OptimizeConfig

INIT_KINDS = ("sphere", "hemisphere", "consensus")


@dataclass(frozen=True)
class RunConfig:
    # model, defaults are the reference experiment
    N: int = 20
    d: int = 3
    kappa: float = 0.5
    m: float = 1.0
    gamma: float = 1.0
    lam: float = 0.1
    T: float = 4.0
    dt: float = 0.01
    omega_scale: float = 0.0
    omega_seed: int = 0
    # initial data
    order: int = 1
    seed: int = 0
    init: str = "sphere"
    v0_scale: float = 0.0
    renorm: bool = True
    # optimizer
    tol: float = 1e-4
    k_max: int = 200
    alpha0: float = 1e-2
    alpha_min: float = 1e-6
    alpha_max: float = 1e2
    # gradient check
    oracle_seed: int = 0
    fd_eps: float = 1e-5
    fd_coords: int = 500
    gradcheck_threshold: float = 1e-3
    gradcheck_flip_sign: bool = False
    out: str = "out"

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigError("order", "must be 1 or 2")
        if self.init not in INIT_KINDS:
            raise ConfigError("init", f"must be one of {', '.join(INIT_KINDS)}")
        if not self.v0_scale >= 0:
            raise ConfigError("v0_scale", "must be >= 0")
        if not self.omega_scale >= 0:
            raise ConfigError("omega_scale", "must be >= 0")
        if self.seed < 0 or self.oracle_seed < 0 or self.omega_seed < 0:
            raise ConfigError("seed", "seeds must be non-negative")
        if not self.fd_eps > 0:
            raise ConfigError("fd_eps", "must be > 0")
        if self.fd_coords < 1:
            raise ConfigError("fd_coords", "must be >= 1")
        if not self.gradcheck_threshold > 0:
            raise ConfigError("gradcheck_threshold", "must be > 0")
        # fail fast on everything the solvers would reject later
        self.model_params()
        self.optimize_config()

    def model_params(self):
        omega = random_skew(self.omega_seed, self.N, self.d, self.omega_scale) if self.omega_scale > 0 else None
        return ModelParams(
            N=self.N, d=self.d, kappa=self.kappa, m=self.m, gamma=self.gamma,
            lam=self.lam, T=self.T, dt=self.dt, omega=omega,
        )

    def optimize_config(self):
        return OptimizeConfig(
            tol=self.tol, k_max=self.k_max, alpha0=self.alpha0,
            alpha_min=self.alpha_min, alpha_max=self.alpha_max,
        )

    def initial_state(self):
        return initial_state(self.order, self.N, self.d, self.seed, self.init, self.v0_scale)

    def echo(self):
        """Flat mapping in config-file key names."""
        out = {}
        for f in fields(self):
            out[_FILE_KEY.get(f.name, f.name)] = getattr(self, f.name)
        return out

    def to_text(self):
        lines = []
        for key, value in self.echo().items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


# ``lambda`` is a Python keyword
_FILE_KEY = {"lam": "lambda"}
_FIELD = {v: k for k, v in _FILE_KEY.items()}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def initial_state(order, N, d, seed, init="sphere", v0_scale=0.0):
    """Seeded initial data.

    ``hemisphere`` reflects each Gaussian draw into x_d >= 0; ``consensus``
    puts every particle at the first sampled point.  Velocities are tangent,
    of norm ``v0_scale``, drawn per particle from the tangent sub-stream.
    """
    x = sample_sphere(seed, N, d)
    if init == "hemisphere":
        x = np.where(x[:, -1:] < 0, -x, x)
    elif init == "consensus":
        x = np.repeat(x[:1], N, axis=0)
    if order == 1:
        return SwarmState(x)
    if init == "consensus":
        v = np.zeros_like(x)
    else:
        v = np.array([sample_tangent(seed, x[i], v0_scale, index=i) for i in range(N)])
    return SwarmState(x, v)


def _convert(key, raw):
    typ = _TYPES[key]
    text = str(raw).strip()
    try:
        if typ in (bool, "bool"):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if typ in (int, "int"):
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if typ in (float, "float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(_FILE_KEY.get(key, key), f"cannot parse {text!r} as {getattr(typ, '__name__', typ)}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        name = _FIELD.get(key, key)
        if name not in _TYPES:
            raise ConfigError(key, "unknown key")
        if name in values:
            raise ConfigError(key, "duplicate key")
        values[name] = _convert(name, value)
    return values


def load_config(path=None, **overrides):
    """Build a RunConfig from an optional file and keyword overrides (None values ignored)."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        values.update(parse_config_text(text))
    for key, value in overrides.items():
        if value is not None:
            values[_FIELD.get(key, key)] = _convert(_FIELD.get(key, key), value)
    return RunConfig(**values)


def replace(cfg: RunConfig, **changes):
    return dataclasses.replace(cfg, **changes)
