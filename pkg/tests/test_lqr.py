import math

import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

from ptrigger.errors import ConfigurationError
from ptrigger.lqr import dlqr, solve_dare
from ptrigger.scenarios import CARTPOLE_A, CARTPOLE_B


def riccati_recursion(A, B, Q, R, steps=200):
    P = Q.copy()
    for _ in range(steps):
        P = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.inv(R + B.T @ P @ B) @ B.T @ P @ A
    return np.linalg.inv(R + B.T @ P @ B) @ B.T @ P @ A


def test_scalar_closed_form():
    K, P = dlqr([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    phi = (1 + math.sqrt(5)) / 2
    assert abs(P[0, 0] - phi) < 1e-9
    assert abs(K[0, 0] - phi / (1 + phi)) < 1e-9


def test_zero_dynamics():
    assert np.all(solve_dare(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2)) == 0)


def test_random_2x2_against_recursion():
    rng = np.random.default_rng(11)
    for _ in range(20):
        A = rng.normal(size=(2, 2))
        A *= rng.uniform(0.3, 0.95) / np.max(np.abs(np.linalg.eigvals(A)))
        B = rng.normal(size=(2, 1))
        Q = np.diag(rng.uniform(0.1, 2, 2))
        R = np.array([[rng.uniform(0.1, 2)]])
        np.testing.assert_allclose(solve_dare(A, B, Q, R), riccati_recursion(A, B, Q, R), atol=1e-6)
        P = solve_discrete_are(A, B, Q, R)
        np.testing.assert_allclose(dlqr(A, B, Q, R)[1], P, atol=1e-6)


def test_cartpole_decays_from_tilt():
    K = solve_dare(CARTPOLE_A, CARTPOLE_B, np.diag([0.75, 4, 0, 0]), [[0.05]])
    Acl = CARTPOLE_A - CARTPOLE_B @ K
    assert np.max(np.abs(np.linalg.eigvals(Acl))) < 1
    x = np.array([0.0, 0.05, 0.0, 0.0])
    for _ in range(3000):
        x = Acl @ x
    assert np.linalg.norm(x) < 1e-4


def test_unstabilizable_reports_system():
    with pytest.raises(ConfigurationError, match="toy"):
        dlqr([[2.0]], [[0.0]], [[1.0]], [[1.0]], max_iter=500, name="toy")
