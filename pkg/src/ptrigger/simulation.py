"""Time-stepped orchestration of agents, scheduler and network accounting.

Per step ``k``:

1. every agent forms its error ``z_k`` and (predictive policies) the
   probability of wanting to transmit at ``k + M``;
2. the scheduler allocates slots (for ``k + M`` under PT, for ``k`` under the
   ET baselines);
3. agents holding a slot at ``k`` apply the trigger and transmitted states
   reset every predictor of that agent immediately;
4. controllers act on predictions;
5. processes and predictors advance with fresh noise;
6. utilization and control errors are recorded.

Random streams are split by purpose (scenario construction, initial states,
process noise, scheduler), so runs that differ only in policy see identical
noise.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .commprob import HorizonParams, m_step_probability, quantize, should_send
from .errors import ConfigurationError, PTError, TableMismatchError
from .exitprob import ErrorProcessSpec, ExitProbTable, build_exit_table
from .model import covariance_factor
from .scenarios import CaccParams, CartPoleParams, build_cacc_fleet, build_cartpole_fleet
from .scenarios.fleet import Fleet
from .scheduling import NetworkSpec, Policy, TriggerParams, network_utilization, top_k

log = logging.getLogger(__name__)

__all__ = [
    "SCENARIOS",
    "TableSettings",
    "RunConfig",
    "RunRecord",
    "WorldState",
    "Simulator",
    "summarize",
    "build_fleet",
    "error_specs",
    "build_tables",
    "run",
    "sweep",
    "derive_seed",
    "expected_fingerprints",
]

SCENARIOS = ("cacc", "cartpole-sync", "cartpole-stabilize")

# stream tags under the master seed
_SCENARIO, _INIT, _NOISE, _SCHED = 0, 1, 2, 3


@dataclass(frozen=True)
class TableSettings:
    grid_size: int = 41
    max_steps: int = 10
    samples: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigurationError("table samples must be at least 1")
        if self.grid_size < 2:
            raise ConfigurationError("table grid_size must be at least 2")
        if self.max_steps < 1:
            raise ConfigurationError("table max_steps must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    N: int
    K: int
    policy: Policy = Policy.PT
    delta: float = 0.01
    c: float = 0.0
    M: int = 2
    p_lower: float = 0.0
    p_star: float = 0.2
    T: float = 10.0
    dt: float = 0.01
    seed: int = 0
    scenario_params: dict = field(default_factory=dict)
    table: TableSettings = field(default_factory=TableSettings)
    error_A: Optional[tuple] = None
    divergence_bound: float = 1e6
    informed_priority: bool = True
    chain: str = "survival"

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy.parse(self.policy))
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.dt <= 0 or self.T < 0:
            raise ConfigurationError("need dt > 0 and T >= 0")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.M > self.table.max_steps:
            raise ConfigurationError(f"M={self.M} exceeds table max_steps={self.table.max_steps}")
        if not 0.0 <= self.p_star < 1.0:
            raise ConfigurationError(f"p_star={self.p_star} outside [0, 1)")
        if not self.divergence_bound > 0:
            raise ConfigurationError("divergence_bound must be positive")
        # cross-field checks live in the component types
        self.network
        self.trigger
        self.horizon

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def network(self) -> NetworkSpec:
        return NetworkSpec(self.N, self.K, 4, self.policy)

    @property
    def trigger(self) -> TriggerParams:
        return TriggerParams(self.delta, self.c)

    @property
    def horizon(self) -> HorizonParams:
        p = self.p_star if self.policy is Policy.PT_STAR else self.p_lower
        return HorizonParams(self.M if self.policy.predictive else 0, self.delta, p, self.chain)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["policy"] = self.policy.value
        d["error_A"] = None if self.error_A is None else [list(r) for r in self.error_A]
        return d

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, default=_json_default)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


@dataclass
class RunRecord:
    """Per-step traces of one run plus summary metrics."""

    config: RunConfig
    U: np.ndarray
    N_p: np.ndarray
    N_c: np.ndarray
    err_norm: np.ndarray
    z_norm: np.ndarray
    granted: np.ndarray
    triggered: np.ndarray
    steps_run: int = 0
    diverged: bool = False
    divergence_step: Optional[int] = None
    E_bar: float = math.nan
    U_bar: float = math.nan
    error: Optional[str] = None
    tag: Optional[dict] = None

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def config_fingerprint(self) -> str:
        return self.config.fingerprint()

    @property
    def empty(self) -> bool:
        return self.steps_run == 0

    def summary(self) -> dict:
        return {
            "config_fingerprint": self.config_fingerprint,
            "scenario": self.config.scenario,
            "policy": self.config.policy.value,
            "N": self.config.N,
            "K": self.config.K,
            "seed": self.seed,
            "steps": self.config.n_steps,
            "steps_run": self.steps_run,
            "E_bar": None if math.isnan(self.E_bar) else self.E_bar,
            "U_bar": None if math.isnan(self.U_bar) else self.U_bar,
            "empty": self.empty,
            "diverged": self.diverged,
            "divergence_step": self.divergence_step,
            "error": self.error,
        }


def summarize(err_norm: np.ndarray, U: np.ndarray, steps_run: int):
    """Mean control-error norm and mean utilization over the executed steps."""
    if steps_run == 0:
        return math.nan, math.nan
    E = float(np.mean(err_norm[:steps_run]))
    Ub = float(np.mean(U[:steps_run]))
    return E, Ub


def build_fleet(config: RunConfig) -> Fleet:
    sp = dict(config.scenario_params)
    sp.update(dt=config.dt, delta=config.delta)
    try:
        if config.scenario == "cacc":
            fleet = build_cacc_fleet(CaccParams(**sp), config.N)
        else:
            mode = config.scenario.split("-", 1)[1]
            sp.setdefault("duration", config.T)
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, _SCENARIO]))
            fleet = build_cartpole_fleet(CartPoleParams(**sp), config.N, mode, rng)
    except TypeError as exc:
        raise ConfigurationError(f"bad scenario_params for {config.scenario}: {exc}") from exc
    if config.error_A is not None:
        A = np.array(config.error_A, dtype=float)
        if A.shape != (fleet.n_x, fleet.n_x):
            raise ConfigurationError(f"error_A must be {fleet.n_x}x{fleet.n_x}")
        fleet.error_A = [A] * fleet.N
    return fleet


def error_specs(config: RunConfig, fleet: Fleet) -> list:
    """Error-process spec of every agent."""
    return [
        ErrorProcessSpec(A, m.sigma_w, config.delta, config.dt)
        for A, m in zip(fleet.error_A, fleet.models)
    ]


def expected_fingerprints(config: RunConfig, fleet: Fleet) -> list:
    t = config.table
    return [s.fingerprint(t.samples, t.seed, t.grid_size, t.max_steps) for s in error_specs(config, fleet)]


def build_tables(config: RunConfig, fleet: Optional[Fleet] = None, workers: int = 1) -> dict:
    """Exit tables for every distinct agent error process, keyed by fingerprint."""
    fleet = fleet if fleet is not None else build_fleet(config)
    t = config.table
    tables = {}
    for spec in error_specs(config, fleet):
        fp = spec.fingerprint(t.samples, t.seed, t.grid_size, t.max_steps)
        if fp not in tables:
            tables[fp] = build_exit_table(spec, t.grid_size, t.max_steps, t.samples, t.seed, workers)
    return tables


@dataclass
class WorldState:
    X: np.ndarray
    X_hat: np.ndarray
    pending: dict
    noise_rng: np.random.Generator
    sched_rng: np.random.Generator


class Simulator:
    """Static data for one run; ``step`` mutates a :class:`WorldState`."""

    def __init__(self, config: RunConfig, fleet: Optional[Fleet] = None, tables: Optional[dict] = None):
        self.config = config
        self.fleet = fleet if fleet is not None else build_fleet(config)
        f = self.fleet
        if f.N != config.N:
            raise ConfigurationError(f"fleet has {f.N} agents, config says {config.N}")
        self.network = config.network
        self.trigger = config.trigger
        self.horizon = config.horizon
        self.n = f.N * f.n_x
        self.Phi = f.Phi
        self.Phi_xx = f.Phi[: self.n, : self.n]
        self.Gam = f.Gam
        self.Gam_x = f.Gam[: self.n]
        self.F = f.gain_matrix()
        self.noise_L = np.stack([covariance_factor(m.sigma_w) for m in f.models])
        self.groups = []
        if config.policy.predictive:
            if tables is None:
                tables = build_tables(config, f)
            fps = expected_fingerprints(config, f)
            missing = sorted(set(fps) - set(tables))
            if missing:
                raise TableMismatchError(
                    f"no exit table for error-process fingerprint(s) {', '.join(m[:12] for m in missing)}"
                )
            for fp in dict.fromkeys(fps):
                self.horizon.check_table(tables[fp])
                idx = np.array([i for i, g in enumerate(fps) if g == fp])
                self.groups.append((tables[fp], idx))
        self.tables = tables

    def init_world(self) -> WorldState:
        cfg, f = self.config, self.fleet
        init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _INIT]))
        x0 = math.sqrt(f.x0_cov) * init_rng.standard_normal(self.n)
        X = np.concatenate([x0, np.zeros(f.n_aux)])
        return WorldState(
            X=X,
            X_hat=x0.copy(),
            pending={},
            noise_rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, _NOISE])),
            sched_rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, _SCHED])),
        )

    def probabilities(self, z_norm: np.ndarray, slots=None, current=None) -> np.ndarray:
        P = np.empty_like(z_norm)
        for table, idx in self.groups:
            P[idx] = m_step_probability(
                table,
                self.horizon,
                z_norm[idx],
                None if slots is None else slots[idx],
                None if current is None else current[idx],
            )
        return P

    def _mask(self, granted) -> np.ndarray:
        mask = np.zeros(self.config.N, dtype=bool)
        if granted is not None:
            mask[granted] = True
        return mask

    def allocate(self, world: WorldState, k: int, z_norm: np.ndarray):
        """Slot mask for step ``k``, trigger decisions and scheduling messages sent."""
        N, K = self.config.N, self.config.K
        policy, M = self.config.policy, self.horizon.M
        thresh = self.trigger.c * self.trigger.delta
        ids = np.arange(N)
        if not policy.predictive:
            if policy is Policy.ET1:
                granted = np.sort(world.sched_rng.choice(N, size=K, replace=False))
                n_p = 0
            else:
                granted = top_k(ids, z_norm, K, world.sched_rng)
                n_p = N
            mask = self._mask(granted)
            return mask, mask & (z_norm >= thresh), n_p
        if M == 0:
            P = self.probabilities(z_norm)
        else:
            mask = self._mask(world.pending.pop(k, None))
            fire = mask & (z_norm >= thresh)
            if self.config.informed_priority:
                slots = np.column_stack(
                    [mask] + [self._mask(world.pending.get(k + m)) for m in range(1, M)]
                )
                P = self.probabilities(z_norm, slots, fire)
            else:
                P = self.probabilities(z_norm)
        send = np.asarray(should_send(P, self.horizon), dtype=bool)
        world.pending[k + M] = top_k(ids[send], quantize(P[send]), K, world.sched_rng)
        if M == 0:
            mask = self._mask(world.pending.pop(k))
            fire = mask & (z_norm >= thresh)
        return mask, fire, int(send.sum())

    def step(self, world: WorldState, k: int):
        """Advance ``world`` from step ``k`` to ``k + 1``; returns the step's trace."""
        f, n = self.fleet, self.n
        Z = (world.X[:n] - world.X_hat).reshape(f.N, f.n_x)
        z_norm = np.sqrt(np.einsum("ij,ij->i", Z, Z))
        granted, fire, n_p = self.allocate(world, k, z_norm)
        if fire.any():
            sel = np.repeat(fire, f.n_x)
            world.X_hat[sel] = world.X[:n][sel]
        u = self.F @ world.X_hat + f.disturbance_input(k, self.config.dt)
        w = np.einsum("nij,nj->ni", self.noise_L, world.noise_rng.standard_normal((f.N, f.n_x)))
        X_next = self.Phi @ world.X + self.Gam @ u
        X_next[:n] += w.reshape(-1)
        world.X = X_next
        world.X_hat = self.Phi_xx @ world.X_hat + self.Gam_x @ u
        eps = (f.C_err @ world.X - f.reference).reshape(f.N, f.n_e)
        err = np.sqrt(np.einsum("ij,ij->i", eps, eps))
        n_c = int(fire.sum())
        U = network_utilization(self.network, n_p, n_c)
        return U, n_p, n_c, err, z_norm, granted, fire

    def diverged(self, world: WorldState) -> bool:
        x = world.X[: self.n].reshape(self.fleet.N, self.fleet.n_x)
        norms = np.sqrt(np.einsum("ij,ij->i", x, x))
        return not np.all(norms <= self.config.divergence_bound)

    def run(self) -> RunRecord:
        cfg = self.config
        T, N = cfg.n_steps, cfg.N
        rec = RunRecord(
            config=cfg,
            U=np.full(T, np.nan),
            N_p=np.zeros(T, dtype=np.int64),
            N_c=np.zeros(T, dtype=np.int64),
            err_norm=np.full((T, N), np.nan),
            z_norm=np.full((T, N), np.nan),
            granted=np.zeros((T, N), dtype=bool),
            triggered=np.zeros((T, N), dtype=bool),
        )
        world = self.init_world()
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(T):
                try:
                    out = self.step(world, k)
                except PTError as exc:
                    raise type(exc)(f"step {k}: {exc}") from exc
                rec.U[k], rec.N_p[k], rec.N_c[k], rec.err_norm[k], rec.z_norm[k], rec.granted[k], rec.triggered[k] = out
                rec.steps_run = k + 1
                if self.diverged(world):
                    rec.diverged = True
                    rec.divergence_step = k + 1
                    log.info("run diverged at step %d", k + 1)
                    break
        rec.E_bar, rec.U_bar = summarize(rec.err_norm, rec.U, rec.steps_run)
        return rec


def run(config: RunConfig, tables: Optional[dict] = None, fleet: Optional[Fleet] = None) -> RunRecord:
    """Execute one run; exit tables are built on the fly when not supplied."""
    return Simulator(config, fleet, tables).run()


def derive_seed(master: int, axis: str, value) -> int:
    """Per-run seed of a sweep point; policy sweeps keep the master seed."""
    if axis == "policy":
        return master
    ss = np.random.SeedSequence([master, sum(axis.encode()), int(value)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _point_config(base: RunConfig, axis: str, value, policy) -> RunConfig:
    changes = {"seed": derive_seed(base.seed, axis, value)}
    if axis == "policy":
        changes["policy"] = Policy.parse(value)
    else:
        changes[axis] = int(value)
        if policy is not None:
            changes["policy"] = Policy.parse(policy)
    return base.replace(**changes)


def _failed_record(cfg: RunConfig, message: str) -> RunRecord:
    empty = np.zeros(0)
    rec = RunRecord(cfg, empty, empty.astype(np.int64), empty.astype(np.int64), *(np.zeros((0, 0)) for _ in range(4)))
    rec.error = message
    return rec


def _sweep_one(base: RunConfig, axis: str, value, policy, tables):
    rec = _sweep_point(base, axis, value, policy, tables)
    pol = value if axis == "policy" else (policy if policy is not None else base.policy)
    rec.tag = {"axis": axis, "value": Policy.parse(pol).value if axis == "policy" else value,
               "policy": Policy.parse(pol).value}
    return rec


def _sweep_point(base, axis, value, policy, tables):
    try:
        cfg = _point_config(base, axis, value, policy)
    except PTError as exc:
        return _failed_record(base, f"{axis}={value}: {exc}")
    try:
        fleet = build_fleet(cfg)
        if cfg.policy.predictive:
            have = dict(tables or {})
            if any(fp not in have for fp in expected_fingerprints(cfg, fleet)):
                have.update(build_tables(cfg, fleet))
            tables = have
        return run(cfg, tables, fleet)
    except PTError as exc:
        return _failed_record(cfg, f"{axis}={value}: {exc}")


def sweep(
    base: RunConfig,
    axis: str,
    values: Sequence,
    tables: Optional[dict] = None,
    workers: int = 1,
    policies: Optional[Sequence] = None,
) -> list:
    """Independent runs along one axis, in the order of ``values``.

    ``axis`` is one of ``"N"``, ``"K"``, ``"policy"``.  With ``policies``
    given (``N``/``K`` axes only) every value is run once per policy and
    all policies at one value share that value's seed, so they see the same
    noise.  Exit tables missing from ``tables`` are built per run.  A
    failing run comes back with ``error`` set instead of raising.
    """
    if axis not in ("N", "K", "policy"):
        raise ConfigurationError(f"cannot sweep over {axis!r}")
    values = list(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    if axis == "policy" and policies is not None:
        raise ConfigurationError("a policy sweep takes its policies from the values")
    points = [(v, p) for v in values for p in (policies if policies is not None else [None])]
    if tables is None and axis != "N" and base.scenario != "cartpole-stabilize":
        pols = values if axis == "policy" else (policies or [base.policy])
        if any(Policy.parse(p).predictive for p in pols):
            tables = build_tables(base)
    args = [(base, axis, v, p, tables) for v, p in points]
    if workers > 1 and len(points) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_one, *zip(*args)))
    return [_sweep_one(*a) for a in args]
