"""Cooperative adaptive cruise control platoons on a multi-lane highway.

Vehicle ``i`` follows ``i-1`` with the time-gap spacing policy
``d_r = r + h v``.  Its communicated state is ``[e, de, dde, alpha]``:
spacing error, its first two derivatives and the desired acceleration.
With engine lag ``tau`` and the filter ``h dalpha = -alpha + u`` the spacing
error obeys

    tau e''' + e'' = alpha_{i-1} - u_i

so the predecessor enters only through its desired acceleration.  The
controller ``u_i = F [e, de, dde] + alpha_hat_{i-1}`` uses predictions for
both terms.  The velocity deviation ``v - v_ref`` is carried as an
auxiliary state for the control-error metric, driven by
``h dv = v_{i-1} - v_i - de``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ..errors import ConfigurationError
from ..model import AgentModel, FeedbackLaw
from .fleet import Fleet

__all__ = [
    "CaccParams",
    "CaccVehicleState",
    "vehicle_continuous",
    "discretize",
    "lane_continuous",
    "cacc_control_error",
    "build_cacc_fleet",
]

N_X = 4


@dataclass(frozen=True)
class CaccParams:
    lanes: int = 5
    v_ref: float = 25.0
    L: float = 4.0
    r: float = 2.5
    tau: float = 0.01
    h: float = 0.7
    k_p: float = 0.2
    k_d: float = 0.7
    k_dd: float = 0.0
    dt: float = 0.01
    sigma_w: float = 9e-6
    delta: float = 0.01
    x0_var: float = 0.01

    def __post_init__(self):
        if self.tau <= 0 or self.h <= 0:
            raise ConfigurationError("tau and h must be positive")
        if self.lanes < 1 or self.dt <= 0:
            raise ConfigurationError("need at least one lane and a positive step")


@dataclass
class CaccVehicleState:
    x: np.ndarray  # [e, de, dde, alpha]
    v: float
    d: float

    @classmethod
    def from_velocity(cls, x, v, params: CaccParams):
        x = np.asarray(x, dtype=float)
        return cls(x=x, v=v, d=params.r + params.h * v + x[0])


def vehicle_continuous(params: CaccParams):
    """Continuous pair for ``[e, de, dde, alpha, dv]`` with inputs ``[u, alpha_prev, dv_prev]``."""
    tau, h = params.tau, params.h
    Ac = np.zeros((5, 5))
    Ac[0, 1] = 1.0
    Ac[1, 2] = 1.0
    Ac[2, 2] = -1.0 / tau
    Ac[3, 3] = -1.0 / h
    Ac[4, 1] = -1.0 / h
    Ac[4, 4] = -1.0 / h
    Bc = np.zeros((5, 3))
    Bc[2, 0] = -1.0 / tau
    Bc[3, 0] = 1.0 / h
    Bc[2, 1] = 1.0 / tau
    Bc[4, 2] = 1.0 / h
    return Ac, Bc


def discretize(Ac, Bc, dt):
    """Zero-order-hold discretization via one matrix exponential."""
    n, m = Bc.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = Ac
    M[:n, n:] = Bc
    E = expm(M * dt)
    return E[:n, :n], E[:n, n:]


def cacc_control_error(v, d, params: CaccParams) -> np.ndarray:
    """``[v - v_ref, d - d_r]`` with ``d_r = r + h v``."""
    return np.array([v - params.v_ref, d - (params.r + params.h * v)])


def lane_continuous(params: CaccParams, n: int):
    """Continuous pair of one ``n``-vehicle lane, state ``[x_0..x_{n-1}, dv_0..dv_{n-1}]``.

    Inputs are the vehicles' commands ``u_i``; the lane leader follows a
    reference vehicle with zero acceleration and velocity deviation.
    """
    Ac1, Bc1 = vehicle_continuous(params)
    A = np.zeros((5 * n, 5 * n))
    B = np.zeros((5 * n, n))

    def idx(i):
        return np.r_[i * N_X:(i + 1) * N_X, n * N_X + i]

    for i in range(n):
        r = idx(i)
        A[np.ix_(r, r)] = Ac1
        B[r, i] = Bc1[:, 0]
        if i:
            p = idx(i - 1)
            A[r, p[3]] += Bc1[:, 1]
            A[r, p[4]] += Bc1[:, 2]
    return A, B


def build_cacc_fleet(params: CaccParams, N: int) -> Fleet:
    """``N`` vehicles split evenly over ``params.lanes`` platoons.

    Each lane is discretized as a whole, so the predecessor's desired
    acceleration and velocity act on the follower exactly within a step.
    Every follower subscribes to its predecessor only; control error per
    vehicle is ``[v - v_ref, e]``.
    """
    if N % params.lanes:
        raise ConfigurationError(f"N={N} is not divisible by lanes={params.lanes}")
    per_lane = N // params.lanes
    Ad, Bd = discretize(*lane_continuous(params, per_lane), params.dt)
    model = AgentModel(Ad[:N_X, :N_X], Bd[:N_X, :1], params.sigma_w * np.eye(N_X))
    F = np.array([[params.k_p, params.k_d, params.k_dd, 0.0]])
    feedforward = np.array([[0.0, 0.0, 0.0, 1.0]])

    n = N * N_X
    Phi = np.zeros((n + N, n + N))
    Gam = np.zeros((n + N, N))
    C = np.zeros((2 * N, n + N))
    laws, topology = [], []
    for lane in range(params.lanes):
        first = lane * per_lane
        rows = np.r_[first * N_X:(first + per_lane) * N_X, n + first:n + first + per_lane]
        Phi[np.ix_(rows, rows)] = Ad
        Gam[np.ix_(rows, np.arange(first, first + per_lane))] = Bd
    for i in range(N):
        C[2 * i, n + i] = 1.0
        C[2 * i + 1, i * N_X] = 1.0
        if i % per_lane == 0:
            laws.append(FeedbackLaw(F))
            topology.append(frozenset())
        else:
            laws.append(FeedbackLaw(F, {i - 1: feedforward}))
            topology.append(frozenset({i - 1}))
    fleet = Fleet(
        name=f"cacc-N{N}",
        models=[model] * N,
        laws=laws,
        topology=topology,
        Phi=Phi,
        Gam=Gam,
        C_err=C,
        n_e=2,
        n_aux=N,
        x0_cov=params.x0_var,
    )
    fleet.validate_stability()
    return fleet
