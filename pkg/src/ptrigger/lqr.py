"""Discrete-time LQR gains by Riccati value iteration."""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

__all__ = ["solve_dare", "dlqr"]


def dlqr(A, B, Q, R, tol: float = 1e-10, max_iter: int = 100_000, name: str = "system"):
    """Optimal gain ``K`` (for ``u = -K x``) and the stationary value matrix ``P``.

    Iterates ``P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA`` from ``P = Q`` until
    successive iterates differ by less than ``tol`` in max norm.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != A.shape or R.shape != (B.shape[1], B.shape[1]):
        raise ConfigurationError(f"weight shapes Q{Q.shape}, R{R.shape} do not fit {name}")
    if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
        raise ConfigurationError(f"R must be positive definite for {name}")
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        G = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - (A.T @ P @ B) @ G
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            break
        if np.max(np.abs(P_next - P)) < tol:
            P = P_next
            BtP = B.T @ P
            return np.linalg.solve(R + BtP @ B, BtP @ A), P
        P = P_next
    raise ConfigurationError(
        f"Riccati iteration for {name} (n_x={A.shape[0]}, n_u={B.shape[1]}) "
        f"did not converge within {max_iter} iterations"
    )


def solve_dare(A, B, Q, R, **kwargs) -> np.ndarray:
    """LQR gain ``K`` with the convention ``u = -K x``."""
    return dlqr(A, B, Q, R, **kwargs)[0]
