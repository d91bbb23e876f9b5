"""Exogenous input disturbances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

__all__ = ["DisturbanceSpec", "apply_disturbance"]

KINDS = ("none", "sinusoid", "impulse")


@dataclass(frozen=True)
class DisturbanceSpec:
    kind: str = "none"
    amplitude: float = 0.0
    frequency: float = 0.0
    t_d: float = 0.0
    target: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "sinusoid" and self.frequency < 0:
            raise ConfigurationError("sinusoid frequency must be nonnegative")
        if self.kind == "impulse" and self.t_d < 0:
            raise ConfigurationError("impulse time must be nonnegative")
        if self.target < 0:
            raise ConfigurationError("disturbance target must be a valid agent id")

    def impulse_step(self, dt: float) -> int:
        return int(round(self.t_d / dt))

    def apply(self, k: int, dt: float, value):
        return apply_disturbance(self, k, dt, value)


def apply_disturbance(spec: DisturbanceSpec, k: int, dt: float, value):
    """Add the disturbance active at step ``k`` to an input value."""
    if spec.kind == "sinusoid":
        return value + spec.amplitude * np.sin(2.0 * np.pi * spec.frequency * k * dt)
    if spec.kind == "impulse" and k == spec.impulse_step(dt):
        return value + spec.amplitude
    return value
