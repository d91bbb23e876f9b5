"""Experiment configuration files.

A config is a YAML mapping whose keys mirror :class:`RunConfig`, plus an
optional ``policies`` list used by sweeps.  ``extends`` names a shipped
preset (``example1``) or a path relative to the including file; the child
is merged over its parent, nested mappings key by key.
"""
from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import yaml

from .errors import ConfigurationError
from .scheduling import Policy
from .simulation import RunConfig, TableSettings

__all__ = [
    "ExperimentConfig",
    "preset_names",
    "preset_text",
    "load_mapping",
    "from_mapping",
    "load_config",
]

_RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)}
_TABLE_KEYS = {f.name for f in dataclasses.fields(TableSettings)}
_EXTRA_KEYS = {"policies", "extends"}
_MAX_DEPTH = 16


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig
    policies: tuple
    source: Optional[str] = None


def _preset_dir():
    return resources.files("ptrigger") / "presets"


def preset_names() -> list:
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    f = _preset_dir() / f"{name}.yaml"
    if not f.is_file():
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return f.read_text()


def _parse(text: str, origin: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{origin}: not valid YAML ({exc})") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{origin}: top level must be a mapping")
    return data


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _resolve(data: dict, here: Optional[Path], depth: int) -> dict:
    parent = data.pop("extends", None)
    if parent is None:
        return data
    if depth > _MAX_DEPTH:
        raise ConfigurationError("config inheritance is too deep (cycle?)")
    if not isinstance(parent, str):
        raise ConfigurationError("'extends' must be a preset name or a path")
    path = Path(parent) if here is None else here / parent
    if path.suffix in (".yaml", ".yml") and path.is_file():
        base = _parse(path.read_text(), str(path))
        base = _resolve(base, path.parent, depth + 1)
    else:
        base = _resolve(_parse(preset_text(parent), f"preset {parent}"), None, depth + 1)
    return _merge(base, data)


def load_mapping(source: Union[str, Path]) -> dict:
    """Fully merged mapping for a config path or preset name."""
    p = Path(source)
    if p.is_file():
        return _resolve(_parse(p.read_text(), str(p)), p.parent, 0)
    if p.suffix in (".yaml", ".yml") or "/" in str(source):
        raise ConfigurationError(f"config file {source} not found")
    return _resolve(_parse(preset_text(str(source)), f"preset {source}"), None, 0)


def from_mapping(data: dict, overrides: Optional[dict] = None, source: Optional[str] = None) -> ExperimentConfig:
    data = _merge(data, overrides or {})
    data.pop("extends", None)
    unknown = set(data) - _RUN_KEYS - _EXTRA_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    table = data.pop("table", None) or {}
    if not isinstance(table, dict):
        raise ConfigurationError("'table' must be a mapping")
    bad = set(table) - _TABLE_KEYS
    if bad:
        raise ConfigurationError(f"unknown table keys: {', '.join(sorted(bad))}")
    policies = data.pop("policies", None)
    for key in ("scenario", "N", "K"):
        if key not in data:
            raise ConfigurationError(f"config is missing required key {key!r}")
    sp = data.get("scenario_params") or {}
    if not isinstance(sp, dict):
        raise ConfigurationError("'scenario_params' must be a mapping")
    data["scenario_params"] = sp
    if data.get("error_A") is not None:
        data["error_A"] = tuple(tuple(float(v) for v in row) for row in data["error_A"])
    try:
        run = RunConfig(table=TableSettings(**table), **data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    if policies is None:
        policies = [run.policy]
    if not isinstance(policies, list) or not policies:
        raise ConfigurationError("'policies' must be a nonempty list")
    pols = tuple(dict.fromkeys(Policy.parse(p) for p in policies))
    return ExperimentConfig(run, pols, source)


def load_config(source: Union[str, Path], overrides: Optional[dict] = None) -> ExperimentConfig:
    """Load, merge and validate a config; nothing is computed here."""
    return from_mapping(load_mapping(source), overrides, str(source))
