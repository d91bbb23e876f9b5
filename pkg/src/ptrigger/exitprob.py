"""Exit probabilities of the prediction-error process from a norm ball.

Between transmissions the error ``z = x - x_hat`` of an agent follows

    z[k+1] = A_cl z[k] + w[k],   w ~ N(0, sigma_w)

and the agent wants to transmit once ``||z|| >= delta``.  ``H(r, m)`` is the
probability that the error, started at norm ``r``, leaves the open ball of
radius ``delta`` within ``m`` steps.  It is estimated offline by Monte Carlo
and stored on a grid of norms; initial directions are drawn uniformly on the
sphere, so the table is a direction average.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, QueryError
from .model import covariance_factor

__all__ = [
    "ErrorProcessSpec",
    "ExitProbTable",
    "simulate_exit",
    "build_exit_table",
    "query_exit_probability",
]


@dataclass(frozen=True)
class ErrorProcessSpec:
    A_cl: np.ndarray
    sigma_w: np.ndarray
    delta: float
    dt: float

    def __post_init__(self):
        A = np.array(self.A_cl, dtype=float, ndmin=2)
        S = np.array(self.sigma_w, dtype=float, ndmin=2)
        if A.shape[0] != A.shape[1] or S.shape != A.shape:
            raise ConfigurationError(
                f"A_cl {A.shape} and sigma_w {S.shape} must be square and equal-sized"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(S))):
            raise ConfigurationError("error process spec has non-finite entries")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        A.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "A_cl", A)
        object.__setattr__(self, "sigma_w", S)
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_x(self) -> int:
        return self.A_cl.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A_cl))))

    def fingerprint(self, samples: int, seed: int, grid_size: int, max_steps: int) -> str:
        h = hashlib.sha256()
        for arr in (self.A_cl, self.sigma_w):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.update(np.array([self.delta, self.dt], dtype="<f8").tobytes())
        h.update(np.array([samples, seed, grid_size, max_steps], dtype="<i8").tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "A_cl": self.A_cl.tolist(),
            "sigma_w": self.sigma_w.tolist(),
            "delta": self.delta,
            "dt": self.dt,
        }


@dataclass(frozen=True)
class ExitProbTable:
    """Tabulated ``H(r, m)`` for ``r`` on ``norm_grid`` and ``m = 0..max_steps``."""

    norm_grid: np.ndarray
    max_steps: int
    values: np.ndarray
    spec_fingerprint: str
    spec: Optional[ErrorProcessSpec] = None
    samples: int = 0
    seed: int = 0

    @property
    def delta(self) -> float:
        return float(self.norm_grid[-1])

    def check_invariants(self) -> None:
        v = self.values
        if v.shape != (self.norm_grid.size, self.max_steps + 1):
            raise ConfigurationError(f"table values have shape {v.shape}")
        if np.any(np.diff(self.norm_grid) <= 0) or self.norm_grid[0] < 0:
            raise ConfigurationError("norm grid must be ascending and nonnegative")
        if np.any(v < 0) or np.any(v > 1):
            raise ConfigurationError("table values outside [0, 1]")
        if np.any(v[self.norm_grid < self.delta, 0] != 0):
            raise ConfigurationError("zero-step exit probability must vanish inside the ball")
        if np.any(np.diff(v, axis=1) < 0):
            raise ConfigurationError("table values must be nondecreasing in steps")

    def to_dict(self) -> dict:
        return {
            "format": "ptrigger-exit-table",
            "version": 1,
            "spec_fingerprint": self.spec_fingerprint,
            "spec": None if self.spec is None else self.spec.to_dict(),
            "samples": self.samples,
            "seed": self.seed,
            "max_steps": self.max_steps,
            "norm_grid": self.norm_grid.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExitProbTable":
        spec = None if d.get("spec") is None else ErrorProcessSpec(**d["spec"])
        table = cls(
            norm_grid=np.array(d["norm_grid"], dtype=float),
            max_steps=int(d["max_steps"]),
            values=np.array(d["values"], dtype=float),
            spec_fingerprint=d["spec_fingerprint"],
            spec=spec,
            samples=int(d.get("samples", 0)),
            seed=int(d.get("seed", 0)),
        )
        table.check_invariants()
        return table

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def simulate_exit(spec: ErrorProcessSpec, z0, max_steps: int, rng_stream: np.random.Generator):
    """First step ``m`` in ``1..max_steps`` with ``||z|| >= delta``.

    Returns 0 if ``z0`` already lies outside the ball and ``None`` if the
    trajectory stays inside for all ``max_steps`` steps.
    """
    if max_steps < 1:
        raise ConfigurationError("max_steps must be at least 1")
    z = np.asarray(z0, dtype=float).reshape(spec.n_x)
    if np.linalg.norm(z) >= spec.delta:
        return 0
    L = covariance_factor(spec.sigma_w)
    for m in range(1, max_steps + 1):
        z = spec.A_cl @ z + L @ rng_stream.standard_normal(spec.n_x)
        if np.linalg.norm(z) >= spec.delta:
            return m
    return None


def _uniform_sphere(rng, n_samples, n_x, radius):
    v = rng.standard_normal((n_samples, n_x))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def _exit_counts(spec, L, radius, samples, max_steps, rng):
    # cumulative exit fraction for m = 0..max_steps from one grid radius
    out = np.zeros(max_steps + 1)
    if radius >= spec.delta:
        out[:] = 1.0
        return out
    if radius == 0.0:
        z = np.zeros((samples, spec.n_x))
    else:
        z = _uniform_sphere(rng, samples, spec.n_x, radius)
    alive = np.ones(samples, dtype=bool)
    exited = 0
    At = spec.A_cl.T
    Lt = L.T
    for m in range(1, max_steps + 1):
        z = z @ At + rng.standard_normal(z.shape) @ Lt
        out_now = alive & (np.einsum("ij,ij->i", z, z) >= spec.delta**2)
        exited += int(out_now.sum())
        alive &= ~out_now
        out[m] = exited / samples
    return out


def build_exit_table(
    spec: ErrorProcessSpec,
    grid_size: int = 41,
    max_steps: int = 10,
    samples: int = 10000,
    seed: int = 0,
    workers: int = 1,
) -> ExitProbTable:
    """Monte-Carlo tabulation of ``H`` on ``grid_size`` equispaced norms in ``[0, delta]``.

    Each grid norm draws from its own substream of ``seed``, so the table
    does not depend on ``workers``.
    """
    if samples < 1:
        raise ConfigurationError("samples must be at least 1")
    if grid_size < 2:
        raise ConfigurationError("grid_size must be at least 2")
    if max_steps < 1:
        raise ConfigurationError("max_steps must be at least 1")
    rho = spec.spectral_radius()
    if rho >= 1.0:
        warnings.warn(
            f"error-process matrix has spectral radius {rho:.4f} >= 1", RuntimeWarning, stacklevel=2
        )
    grid = np.linspace(0.0, spec.delta, grid_size)
    grid[-1] = spec.delta
    L = covariance_factor(spec.sigma_w)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(grid_size)]

    def job(g):
        return _exit_counts(spec, L, grid[g], samples, max_steps, streams[g])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, range(grid_size)))
    else:
        rows = [job(g) for g in range(grid_size)]
    values = np.vstack(rows)
    table = ExitProbTable(
        norm_grid=grid,
        max_steps=max_steps,
        values=values,
        spec_fingerprint=spec.fingerprint(samples, seed, grid_size, max_steps),
        spec=spec,
        samples=samples,
        seed=seed,
    )
    table.check_invariants()
    return table


def query_exit_probability(table: ExitProbTable, z_norm, steps: int):
    """Interpolated ``H(z_norm, steps)``; accepts scalar or array norms.

    Norms at or beyond ``delta`` give 1.  Below ``delta`` the value is
    interpolated linearly between interior grid nodes and held constant
    past the last one.
    """
    steps = int(steps)
    if steps < 0 or steps > table.max_steps:
        raise QueryError(f"steps={steps} outside [0, {table.max_steps}]")
    r = np.asarray(z_norm, dtype=float)
    outside = r >= table.delta
    if steps == 0:
        p = outside.astype(float)
    else:
        # H jumps to 1 on the boundary; inside, interpolate interior nodes only
        inner = table.norm_grid < table.delta
        p = np.where(outside, 1.0, np.interp(r, table.norm_grid[inner], table.values[inner, steps]))
    return float(p) if p.ndim == 0 else p
