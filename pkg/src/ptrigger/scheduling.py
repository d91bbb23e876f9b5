"""Slot allocation, trigger decisions and byte-level utilization accounting."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import AccountingError, ConfigurationError, SchedulerError

__all__ = [
    "Policy",
    "NetworkSpec",
    "SlotAllocation",
    "TriggerParams",
    "top_k",
    "pt_schedule",
    "et1_schedule",
    "et2_schedule",
    "trigger_decision",
    "network_utilization",
]

STATE_BYTES = 4  # per state entry (float32)


class Policy(str, enum.Enum):
    PT = "PT"
    PT_STAR = "PT_STAR"
    ET1 = "ET1"
    ET2 = "ET2"

    @property
    def scheduling_bytes(self) -> int:
        return {"PT": 1, "PT_STAR": 1, "ET1": 0, "ET2": 4}[self.value]

    @property
    def predictive(self) -> bool:
        return self in (Policy.PT, Policy.PT_STAR)

    @classmethod
    def parse(cls, name) -> "Policy":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("*", "_STAR").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown policy {name!r}") from None


@dataclass(frozen=True)
class NetworkSpec:
    """Shared network with ``K`` state slots per step for ``N`` agents.

    Capacity is ``eta = 4 N + 4 n_x K`` bytes per step.
    """

    N: int
    K: int
    n_x: int
    policy: Policy = Policy.PT

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy.parse(self.policy))
        if self.N < 1 or self.n_x < 1:
            raise ConfigurationError("N and n_x must be positive")
        if not 0 <= self.K < self.N:
            raise ConfigurationError(f"need 0 <= K < N, got K={self.K}, N={self.N}")

    @property
    def b(self) -> int:
        return self.policy.scheduling_bytes

    @property
    def eta(self) -> int:
        return 4 * self.N + STATE_BYTES * self.n_x * self.K


@dataclass(frozen=True)
class SlotAllocation:
    step: int
    granted: frozenset

    def mask(self, N: int) -> np.ndarray:
        m = np.zeros(N, dtype=bool)
        m[list(self.granted)] = True
        return m


@dataclass(frozen=True)
class TriggerParams:
    delta: float
    c: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigurationError("delta must be positive")
        if not 0.0 <= self.c <= 1.0:
            raise ConfigurationError(f"c={self.c} outside [0, 1]")


def top_k(ids: np.ndarray, keys: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Ids of the ``K`` largest keys; equal keys are ordered at random.

    Input order does not matter: entries are sorted by id before the
    tie-breaking draws are assigned.  Always consumes ``len(ids)`` uniforms.
    """
    ids = np.asarray(ids, dtype=np.int64)
    keys = np.asarray(keys, dtype=float)
    order = np.argsort(ids, kind="stable")
    ids, keys = ids[order], keys[order]
    jitter = rng.random(ids.size)
    pick = np.lexsort((jitter, -keys))[: min(K, ids.size)]
    return np.sort(ids[pick])


def _unpack(entries, name):
    ids, keys = [], []
    for e in entries:
        if hasattr(e, "agent_id"):
            ids.append(e.agent_id)
            keys.append(e.value)
        else:
            i, v = e
            ids.append(i)
            keys.append(v)
    if len(set(ids)) != len(ids):
        raise SchedulerError(f"duplicate agent ids in {name}")
    return np.array(ids, dtype=np.int64), np.array(keys, dtype=float)


def pt_schedule(priorities: Iterable, K: int, rng_stream: np.random.Generator, step: int = 0) -> SlotAllocation:
    """Grant the ``K`` highest quantized priorities among the submitters."""
    ids, keys = _unpack(priorities, "priorities")
    return SlotAllocation(step, frozenset(top_k(ids, keys, K, rng_stream).tolist()))


def et1_schedule(N: int, K: int, rng_stream: np.random.Generator, step: int = 0) -> SlotAllocation:
    """Uniformly random ``K``-subset of the agents."""
    if not 0 <= K < N:
        raise ConfigurationError(f"need 0 <= K < N, got K={K}, N={N}")
    granted = rng_stream.choice(N, size=K, replace=False)
    return SlotAllocation(step, frozenset(int(i) for i in granted))


def et2_schedule(error_norms: Sequence, K: int, rng_stream: np.random.Generator, step: int = 0) -> SlotAllocation:
    """Grant the ``K`` largest error norms."""
    ids, keys = _unpack(error_norms, "error norms")
    if not np.all(np.isfinite(keys)):
        raise SchedulerError("error norms must be finite")
    return SlotAllocation(step, frozenset(top_k(ids, keys, K, rng_stream).tolist()))


def trigger_decision(granted, z_norm, params: TriggerParams):
    """Transmit iff a slot is held and ``||z|| >= c delta``."""
    out = np.logical_and(granted, np.asarray(z_norm) >= params.c * params.delta)
    return out if np.ndim(out) else bool(out)


def network_utilization(spec: NetworkSpec, N_p: int, N_c: int) -> float:
    """Fraction of the per-step capacity used by scheduling and state messages."""
    if not 0 <= N_p <= spec.N:
        raise AccountingError(f"N_p={N_p} outside [0, {spec.N}]")
    if not 0 <= N_c <= spec.K:
        raise AccountingError(f"N_c={N_c} outside [0, {spec.K}]")
    return (spec.b * N_p + STATE_BYTES * spec.n_x * N_c) / spec.eta
