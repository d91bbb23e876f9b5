"""M-step communication probability and its 1-byte scheduling payload.

The probability that an agent wants to transmit ``M`` steps from now is
expanded over every outcome sequence of the intermediate transmission
events.  Each conditional is read from an exit table: after a transmission
the error restarts at zero, so only the latest positive event matters.

Two readings of the conditionals are offered.  ``"survival"`` (default)
uses that a negative outcome means the error stayed inside the ball, so
the conditional is the exit hazard ``(H(r, m) - H(r, s)) / (1 - H(r, s))``
with ``s`` the latest such step.  ``"cumulative"`` uses ``H(r, m)`` directly,
which counts exits the earlier negatives already ruled out.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, PTError
from .exitprob import ExitProbTable, query_exit_probability

__all__ = [
    "MAX_HORIZON",
    "CHAIN_RULES",
    "HorizonParams",
    "QuantizedPriority",
    "conditional_probability",
    "sequence_weights",
    "m_step_probability",
    "quantize",
    "dequantize",
    "should_send",
]

MAX_HORIZON = 10


CHAIN_RULES = ("survival", "cumulative")


@dataclass(frozen=True)
class HorizonParams:
    M: int
    delta: float
    p_lower: float = 0.0
    chain: str = "survival"

    def __post_init__(self):
        if self.chain not in CHAIN_RULES:
            raise ConfigurationError(f"chain rule must be one of {CHAIN_RULES}, got {self.chain!r}")
        if not 0 <= self.M <= MAX_HORIZON:
            raise ConfigurationError(f"horizon M={self.M} outside [0, {MAX_HORIZON}]")
        if not self.delta > 0:
            raise ConfigurationError("delta must be positive")
        if not 0.0 <= self.p_lower < 1.0:
            raise ConfigurationError(f"p_lower={self.p_lower} outside [0, 1)")

    def check_table(self, table: ExitProbTable) -> None:
        if self.M > table.max_steps:
            raise ConfigurationError(
                f"horizon M={self.M} exceeds table max_steps={table.max_steps}"
            )
        if not math.isclose(table.delta, self.delta, rel_tol=1e-12):
            raise ConfigurationError(
                f"table threshold {table.delta} differs from delta={self.delta}"
            )


@dataclass(frozen=True)
class QuantizedPriority:
    value: int
    agent_id: int

    def __post_init__(self):
        if not 0 <= self.value <= 100:
            raise ConfigurationError(f"priority {self.value} outside [0, 100]")


def conditional_probability(
    table: ExitProbTable,
    z_norm,
    outcomes_so_far: Sequence[bool],
    target_offset: int,
    informative=None,
    chain: str = "survival",
):
    """Probability of a transmission at ``target_offset`` given earlier outcomes.

    ``outcomes_so_far[l]`` is the event at offset ``l < target_offset``.
    ``informative`` (shape ``z_norm.shape + (target_offset,)``) marks
    offsets where a negative outcome shows the error was inside the ball;
    by default all are.  Ignored under the cumulative rule.
    """
    m = int(target_offset)
    if len(outcomes_so_far) != m:
        raise ConfigurationError(f"prefix of length {len(outcomes_so_far)} for offset {m}")
    if m > table.max_steps:
        raise ConfigurationError(f"offset {m} exceeds table max_steps={table.max_steps}")
    if chain not in CHAIN_RULES:
        raise ConfigurationError(f"unknown chain rule {chain!r}")
    z = np.asarray(z_norm, dtype=float)
    last = None
    for j, o in enumerate(outcomes_so_far):
        if o:
            last = j
    r, start = (z, 0) if last is None else (np.zeros(z.shape), last)
    h_m = query_exit_probability(table, r, m - start)
    if chain == "cumulative":
        return h_m
    # steps survived from the restart, per agent
    seen = np.zeros(z.shape, dtype=np.int64)
    for l in range(start + (last is not None), m):
        if not outcomes_so_far[l]:
            ok = True if informative is None else np.asarray(informative, dtype=bool)[..., l]
            seen = np.where(ok, l - start, seen)
    h_s = np.zeros(z.shape)
    for e in np.unique(seen):
        h_s = np.where(seen == e, query_exit_probability(table, r, int(e)), h_s)
    room = 1.0 - h_s
    p = np.where(room > 0, (np.asarray(h_m) - h_s) / np.where(room > 0, room, 1.0), 1.0)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def sequence_weights(table: ExitProbTable, params: HorizonParams, z_norm, slots=None, current=None):
    """All ``2**M`` intermediate outcome sequences with their probabilities.

    Returns ``(sequences, weights, final)`` where ``final[s]`` is the
    conditional probability of a transmission at offset ``M`` after
    sequence ``s``.

    ``slots`` (shape ``z_norm.shape + (M,)``) marks offsets at which the
    agent already holds a slot; without one the event is impossible and a
    negative outcome says nothing about the error.
    ``current`` fixes the outcome at offset 0 to the agent's actual
    decision.  With both omitted every event follows the table alone.
    """
    params.check_table(table)
    M = params.M
    z = np.asarray(z_norm, dtype=float)
    if slots is not None:
        slots = np.asarray(slots, dtype=bool)
        if slots.shape != z.shape + (M,):
            raise ConfigurationError(f"slots must have shape {z.shape + (M,)}, got {slots.shape}")
    cache = {}

    def cond(prefix):
        if prefix not in cache:
            inf = None if slots is None else slots[..., : len(prefix)]
            cache[prefix] = np.asarray(
                conditional_probability(table, z, list(prefix), len(prefix), inf, params.chain),
                dtype=float,
            )
        return cache[prefix]

    sequences, weights, final = [], [], []
    for seq in itertools.product((False, True), repeat=M):
        w = np.ones(z.shape)
        for m, o in enumerate(seq):
            if m == 0 and current is not None:
                p = np.asarray(current, dtype=float)
            else:
                p = cond(seq[:m])
            if slots is not None:
                p = np.where(slots[..., m], p, 0.0)
            w = w * (p if o else 1.0 - p)
        sequences.append(seq)
        weights.append(w)
        final.append(cond(seq))
    return sequences, np.array(weights), np.array(final)


def m_step_probability(table: ExitProbTable, params: HorizonParams, z_norm, slots=None, current=None):
    """Probability of wanting to transmit ``M`` steps ahead; scalar or array in.

    See :func:`sequence_weights` for ``slots`` and ``current``.
    """
    z = np.asarray(z_norm, dtype=float)
    if np.any(z < 0):
        raise ConfigurationError("error norms must be nonnegative")
    _, weights, final = sequence_weights(table, params, z, slots, current)
    p = np.clip((weights * final).sum(axis=0), 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def quantize(P):
    """``floor(100 P)``: the 1-byte payload sent to the scheduler."""
    arr = np.asarray(P, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise PTError(f"probability outside [0, 1]: {P!r}")
    q = np.floor(100.0 * arr).astype(np.int64)
    return int(q) if q.ndim == 0 else q


def dequantize(value):
    return np.asarray(value, dtype=float) / 100.0


def should_send(P, params: HorizonParams):
    """Lower-bound filter: an agent reports only if ``P > p_lower``.

    With ``p_lower == 0`` every agent reports every step.
    """
    if params.p_lower == 0.0:
        return np.ones(np.shape(P), dtype=bool) if np.ndim(P) else True
    out = np.asarray(P) > params.p_lower
    return out if out.ndim else bool(out)
