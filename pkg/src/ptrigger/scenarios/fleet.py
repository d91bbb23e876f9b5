"""Stacked linear representation of a fleet of networked agents.

The truth vector of a fleet is ``[x_0, ..., x_{N-1}, aux]`` where ``x_i`` are
the communicated agent states and ``aux`` holds bookkeeping states that never
leave the vehicle (for instance absolute velocity deviations in a platoon).
One simulation step is

    X+     = Phi X + Gam u + [w; 0]
    Xhat+  = Phi_xx Xhat + Gam_x u
    u      = F Xhat + d_k

Physical coupling between agents (a follower feeling its predecessor's
acceleration) lives in the off-diagonal blocks of ``Phi_xx``; predictors
use predicted neighbour states in the same slots.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigurationError
from ..model import AgentModel, FeedbackLaw
from .disturbance import DisturbanceSpec

__all__ = ["Fleet"]


@dataclass
class Fleet:
    name: str
    models: list
    laws: list
    topology: list
    Phi: np.ndarray
    Gam: np.ndarray
    C_err: np.ndarray
    n_e: int
    n_aux: int = 0
    disturbances: list = field(default_factory=list)
    error_A: Optional[list] = None
    x0_cov: float = 0.01
    reference: Optional[np.ndarray] = None

    def __post_init__(self):
        N = len(self.models)
        if N < 1 or len(self.laws) != N or len(self.topology) != N:
            raise ConfigurationError("models, laws and topology must have one entry per agent")
        n_x, n_u = self.models[0].n_x, self.models[0].n_u
        for i, (m, law) in enumerate(zip(self.models, self.laws)):
            if m.n_x != n_x or m.n_u != n_u:
                raise ConfigurationError(f"agent {i} has dimensions differing from agent 0")
            law.check(m)
            missing = set(law.F_others) - set(self.topology[i])
            if missing:
                raise ConfigurationError(f"agent {i} has gains for non-neighbours {sorted(missing)}")
        n = N * n_x
        n_full = n + self.n_aux
        if self.Phi.shape != (n_full, n_full) or self.Gam.shape != (n_full, N * n_u):
            raise ConfigurationError("stacked matrices have inconsistent shapes")
        if np.any(self.Phi[:n, n:] != 0):
            raise ConfigurationError("auxiliary states may not drive agent states")
        for i, m in enumerate(self.models):
            sl = slice(i * n_x, (i + 1) * n_x)
            if not np.array_equal(self.Phi[sl, sl], m.A):
                raise ConfigurationError(f"diagonal block {i} of Phi differs from agent model")
            if not np.array_equal(self.Gam[sl, i * n_u:(i + 1) * n_u], m.B):
                raise ConfigurationError(f"input block {i} of Gam differs from agent model")
        if self.C_err.shape != (N * self.n_e, n_full):
            raise ConfigurationError("control-error map has the wrong shape")
        if self.error_A is None:
            self.error_A = [m.A for m in self.models]
        if self.reference is None:
            self.reference = np.zeros(N * self.n_e)

    @property
    def N(self) -> int:
        return len(self.models)

    @property
    def n_x(self) -> int:
        return self.models[0].n_x

    @property
    def n_u(self) -> int:
        return self.models[0].n_u

    def gain_matrix(self) -> np.ndarray:
        """Stacked gain ``F`` with ``u = F Xhat``."""
        N, n_x, n_u = self.N, self.n_x, self.n_u
        F = np.zeros((N * n_u, N * n_x))
        for i, law in enumerate(self.laws):
            rows = slice(i * n_u, (i + 1) * n_u)
            F[rows, i * n_x:(i + 1) * n_x] = law.F_self
            for j, G in law.F_others.items():
                F[rows, j * n_x:(j + 1) * n_x] += G
        return F

    def stacked_model(self) -> AgentModel:
        """The agent-state part of the fleet as one large model."""
        n = self.N * self.n_x
        S = np.zeros((n, n))
        for i, m in enumerate(self.models):
            S[i * self.n_x:(i + 1) * self.n_x, i * self.n_x:(i + 1) * self.n_x] = m.sigma_w
        return AgentModel(self.Phi[:n, :n], self.Gam[:n], S)

    def closed_loop(self) -> np.ndarray:
        """Full-information closed-loop transition of the truth vector."""
        n = self.N * self.n_x
        F = np.zeros((self.N * self.n_u, self.Phi.shape[0]))
        F[:, :n] = self.gain_matrix()
        return self.Phi + self.Gam @ F

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.closed_loop()))))

    def validate_stability(self) -> None:
        rho = self.spectral_radius()
        if not rho < 1.0:
            raise ConfigurationError(
                f"{self.name}: closed loop has spectral radius {rho:.6f} >= 1"
            )

    def disturbance_input(self, k: int, dt: float) -> np.ndarray:
        d = np.zeros(self.N * self.n_u)
        for spec in self.disturbances:
            sl = slice(spec.target * self.n_u, (spec.target + 1) * self.n_u)
            d[sl] = spec.apply(k, dt, d[sl])
        return d
