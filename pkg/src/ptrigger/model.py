"""Agent dynamics, state predictors and distributed linear feedback.

Every agent follows

    x[k+1] = A x[k] + B u[k] + w[k],   w ~ N(0, sigma_w)

and every subscriber runs a deterministic copy of that recursion with the
noise dropped.  The copy is overwritten by the true state whenever the agent
transmits.  All functions here are pure: noise is drawn by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "AgentModel",
    "AgentState",
    "FeedbackLaw",
    "EstimationError",
    "step_process",
    "step_predictor",
    "control_input",
    "estimation_error",
    "covariance_factor",
]

_PSD_TOL = 1e-10


def _as_matrix(M, name):
    M = np.array(M, dtype=float, ndmin=2)
    if M.ndim != 2:
        raise ConfigurationError(f"{name} must be a 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigurationError(f"{name} has non-finite entries")
    return M


def _as_vector(v, n, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ConfigurationError(f"{name} must have length {n}, got {v.shape[0]}")
    return v


@dataclass(frozen=True)
class AgentModel:
    """Discrete-time LTI process ``x+ = A x + B u + w``.

    ``B`` may have zero columns (``n_u == 0``) for autonomous agents.
    """

    A: np.ndarray
    B: np.ndarray
    sigma_w: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise ConfigurationError(f"A must be square, got {A.shape}")
        B = np.array(self.B, dtype=float)
        if B.size == 0:
            B = np.zeros((n_x, 0))
        B = B.reshape(n_x, -1) if B.ndim < 2 else B
        if B.shape[0] != n_x:
            raise ConfigurationError(f"B has {B.shape[0]} rows, expected {n_x}")
        if not np.all(np.isfinite(B)):
            raise ConfigurationError("B has non-finite entries")
        S = _as_matrix(self.sigma_w, "sigma_w")
        if S.shape != (n_x, n_x):
            raise ConfigurationError(f"sigma_w must be {n_x}x{n_x}, got {S.shape}")
        if not np.allclose(S, S.T, atol=1e-12):
            raise ConfigurationError("sigma_w must be symmetric")
        if np.linalg.eigvalsh(S).min() < -_PSD_TOL:
            raise ConfigurationError("sigma_w must be positive semidefinite")
        for name, value in (("A", A), ("B", B), ("sigma_w", S)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def noise_factor(self) -> np.ndarray:
        """Square root ``L`` of ``sigma_w`` with ``L @ L.T == sigma_w``."""
        return covariance_factor(self.sigma_w)


@dataclass
class AgentState:
    """True state, own prediction, and predictions of communicating agents."""

    x: np.ndarray
    x_hat_self: np.ndarray
    x_hat_others: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        n = self.x.shape[0]
        self.x_hat_self = _as_vector(self.x_hat_self, n, "x_hat_self")
        self.x_hat_others = {
            j: _as_vector(v, n, f"x_hat_others[{j}]") for j, v in self.x_hat_others.items()
        }
        if not np.all(np.isfinite(self.x_hat_self)) or not all(
            np.all(np.isfinite(v)) for v in self.x_hat_others.values()
        ):
            raise ConfigurationError("predictions must be finite")


@dataclass(frozen=True)
class FeedbackLaw:
    """Static gains ``u = F_self x_hat_self + sum_j F_others[j] x_hat_j``."""

    F_self: np.ndarray
    F_others: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        F = np.array(self.F_self, dtype=float, ndmin=2)
        others = {int(j): np.array(G, dtype=float, ndmin=2) for j, G in self.F_others.items()}
        for j, G in others.items():
            if G.shape != F.shape:
                raise ConfigurationError(
                    f"gain for agent {j} has shape {G.shape}, expected {F.shape}"
                )
        object.__setattr__(self, "F_self", F)
        object.__setattr__(self, "F_others", others)

    def check(self, model: AgentModel) -> None:
        if self.F_self.shape != (model.n_u, model.n_x):
            raise ConfigurationError(
                f"gain shape {self.F_self.shape} does not match model "
                f"(n_u={model.n_u}, n_x={model.n_x})"
            )


@dataclass(frozen=True)
class EstimationError:
    z: np.ndarray
    norm: float


def covariance_factor(S) -> np.ndarray:
    """Lower-triangular square root of a PSD matrix.

    Falls back to an eigendecomposition with negative eigenvalues clipped
    to zero when Cholesky fails (singular or numerically indefinite input).
    """
    S = np.asarray(S, dtype=float)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(S)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _check_input(model, u):
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != (model.n_u,):
        raise ConfigurationError(f"u must have length {model.n_u}, got {u.shape[0]}")
    return u


def step_process(model: AgentModel, x, u, noise) -> np.ndarray:
    """One step of the true process, ``A x + B u + noise``."""
    x = _as_vector(x, model.n_x, "x")
    u = _check_input(model, u)
    noise = _as_vector(noise, model.n_x, "noise")
    return model.A @ x + model.B @ u + noise


def step_predictor(model: AgentModel, x_hat, u, communicated: Optional[np.ndarray] = None):
    """Advance a prediction, or replace it with a communicated state."""
    x_hat = _as_vector(x_hat, model.n_x, "x_hat")
    u = _check_input(model, u)
    if communicated is not None:
        return _as_vector(communicated, model.n_x, "communicated").copy()
    return model.A @ x_hat + model.B @ u


def control_input(law: FeedbackLaw, state: AgentState) -> np.ndarray:
    u = law.F_self @ state.x_hat_self
    for j, G in law.F_others.items():
        try:
            x_hat_j = state.x_hat_others[j]
        except KeyError:
            raise ConfigurationError(f"no prediction held for agent {j}") from None
        u = u + G @ x_hat_j
    return u


def estimation_error(x, x_hat) -> EstimationError:
    x = np.asarray(x, dtype=float).reshape(-1)
    x_hat = _as_vector(x_hat, x.shape[0], "x_hat")
    z = x - x_hat
    return EstimationError(z=z, norm=float(np.linalg.norm(z)))
