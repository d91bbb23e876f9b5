"""Fleets of cart-pole systems: position synchronization and stabilization.

The identified single-agent model below acts on ``[s, theta, ds, dtheta]``
with the cart force as scalar input.  Every controller acts on predictions
only, so an agent runs open loop between its own transmissions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigurationError
from ..lqr import solve_dare
from ..model import AgentModel, FeedbackLaw
from .disturbance import DisturbanceSpec
from .fleet import Fleet

__all__ = [
    "CARTPOLE_A",
    "CARTPOLE_B",
    "CartPoleParams",
    "sync_gain",
    "build_cartpole_fleet",
]

CARTPOLE_A = np.array(
    [
        [1.0006, -0.0034, 0.0076, 0.0009],
        [0.0098, 0.9785, 0.0041, 0.0057],
        [0.0231, -0.1186, 0.9268, 0.0366],
        [-0.0790, 0.2596, -0.1350, 1.0500],
    ]
)
CARTPOLE_B = np.array([[0.0003], [0.0002], [0.0076], [0.0160]])


@dataclass(frozen=True)
class CartPoleParams:
    A: np.ndarray = field(default_factory=lambda: CARTPOLE_A.copy())
    B: np.ndarray = field(default_factory=lambda: CARTPOLE_B.copy())
    sigma_w: float = 2.5e-5
    sigma_eps: float = 1e-6
    Q: tuple = (0.75, 4.0, 0.0, 0.0)
    R: float = 0.05
    Q_sync: tuple = (30.0, 0.0, 0.0, 0.0)
    dt: float = 0.01
    delta: float = 0.02
    x0_var: float = 0.01
    physical_agent: Optional[int] = None
    heterogeneity: float = 0.02
    sinusoid_amplitude: float = 0.5
    sinusoid_frequency: float = 0.2
    disturbed_agent: Optional[int] = None
    impulse_amplitude: float = 10.0
    impulse_window: tuple = (10.0, None)
    physical_impulse_time: float = 20.0
    duration: float = 30.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        if A.shape != (4, 4) or B.shape != (4, 1):
            raise ConfigurationError("cart-pole model must be 4x4 with a 4x1 input")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)


def sync_gain(A, B, Q, R, Q_sync, N) -> np.ndarray:
    """Centralized LQR gain (``u = -K X``) penalizing pairwise state differences.

    Cost per step: ``sum_i x_i'Q x_i + sum_{i<j} (x_i-x_j)'Q_sync(x_i-x_j) + R sum_i u_i^2``.
    """
    lap = N * np.eye(N) - np.ones((N, N))
    Q_full = np.kron(np.eye(N), Q) + np.kron(lap, Q_sync)
    R_full = np.kron(np.eye(N), np.atleast_2d(R))
    return solve_dare(np.kron(np.eye(N), A), np.kron(np.eye(N), B), Q_full, R_full, name=f"{N}-agent sync fleet")


def _stack(models, gains, topology, C, n_e, name, disturbances, x0_var, reference=None):
    N = len(models)
    Phi = np.zeros((4 * N, 4 * N))
    Gam = np.zeros((4 * N, N))
    for i, m in enumerate(models):
        Phi[4 * i:4 * i + 4, 4 * i:4 * i + 4] = m.A
        Gam[4 * i:4 * i + 4, i] = m.B[:, 0]
    laws = []
    for i in range(N):
        F_self = gains[i][i]
        others = {j: G for j, G in gains[i].items() if j != i}
        laws.append(FeedbackLaw(F_self, others))
    return Fleet(
        name=name,
        models=models,
        laws=laws,
        topology=topology,
        Phi=Phi,
        Gam=Gam,
        C_err=C,
        n_e=n_e,
        disturbances=disturbances,
        x0_cov=x0_var,
        reference=reference,
    )


def build_cartpole_fleet(params: CartPoleParams, N: int, mode: str = "sync", rng: Optional[np.random.Generator] = None) -> Fleet:
    """Homogeneous synchronizing fleet or heterogeneous stabilizing fleet.

    ``rng`` draws the model perturbations and impulse times of the
    stabilization fleet; the sync fleet is deterministic.
    """
    if N < 2:
        raise ConfigurationError("a cart-pole fleet needs at least two agents")
    if mode not in ("sync", "stabilize"):
        raise ConfigurationError(f"unknown cart-pole mode {mode!r}")
    phys = params.physical_agent
    if phys is not None and not 0 <= phys < N:
        raise ConfigurationError(f"physical agent {phys} outside [0, {N})")
    Sw = params.sigma_w * np.eye(4)
    Se = params.sigma_eps * np.eye(4)
    Q = np.diag(params.Q)
    R = np.array([[params.R]])

    if mode == "sync":
        models = [AgentModel(params.A, params.B, Se if i == phys else Sw) for i in range(N)]
        K = sync_gain(params.A, params.B, Q, R, np.diag(params.Q_sync), N)
        gains = [{j: -K[i:i + 1, 4 * j:4 * j + 4] for j in range(N)} for i in range(N)]
        topology = [frozenset(j for j in range(N) if j != i) for i in range(N)]
        target = params.disturbed_agent
        if target is None:
            target = N - 1 if phys != N - 1 else N - 2
        disturbances = [
            DisturbanceSpec("sinusoid", params.sinusoid_amplitude, params.sinusoid_frequency, target=target)
        ]
        # error of agent i: s_i - s_target
        C = np.zeros((N, 4 * N))
        for i in range(N):
            C[i, 4 * i] += 1.0
            C[i, 4 * target] -= 1.0
        fleet = _stack(models, gains, topology, C, 1, f"cartpole-sync-N{N}", disturbances, params.x0_var)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        models, gains, disturbances = [], [], []
        lo, hi = params.impulse_window
        hi = params.duration - 5.0 if hi is None else hi
        for i in range(N):
            if i == phys:
                A = params.A
            else:
                A = params.A * (1.0 + rng.uniform(-params.heterogeneity, params.heterogeneity, size=(4, 4)))
            models.append(AgentModel(A, params.B, Se if i == phys else Sw))
            gains.append({i: -solve_dare(A, params.B, Q, R, name=f"cart-pole agent {i}")})
            t_d = params.physical_impulse_time if i == phys else float(rng.uniform(lo, max(lo, hi)))
            disturbances.append(DisturbanceSpec("impulse", params.impulse_amplitude, t_d=t_d, target=i))
        topology = [frozenset() for _ in range(N)]
        C = np.eye(4 * N)
        fleet = _stack(models, gains, topology, C, 4, f"cartpole-stabilize-N{N}", disturbances, params.x0_var)
    fleet.validate_stability()
    return fleet
