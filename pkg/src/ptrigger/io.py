"""Files written and read by the command line: exit tables, run traces, sweeps.

Every artifact carries the config fingerprint and master seed.  Floats are
written with ``repr`` so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import ChecksumError, ConfigurationError
from .exitprob import ExitProbTable
from .simulation import RunRecord

__all__ = [
    "TABLE_FORMAT",
    "RUN_CSV_VERSION",
    "SWEEP_CSV_VERSION",
    "RUN_COLUMNS",
    "SWEEP_COLUMNS",
    "table_filename",
    "dump_table",
    "save_table",
    "load_table",
    "run_csv_text",
    "summary_json_text",
    "sweep_csv_text",
    "write_text",
]

TABLE_FORMAT = "ptrigger-exit-table-file"
RUN_CSV_VERSION = 1
SWEEP_CSV_VERSION = 1
RUN_COLUMNS = ("k", "t", "U", "N_p", "N_c", "n_granted", "E_k", "granted", "triggered")
SWEEP_COLUMNS = ("axis", "value", "policy", "seed", "E_bar", "U_bar", "diverged", "divergence_step", "status")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def table_filename(fingerprint: str) -> str:
    return f"exit-table-{fingerprint[:16]}.json"


def dump_table(table: ExitProbTable) -> str:
    payload = table.to_dict()
    body = _canonical(payload)
    doc = {
        "format": TABLE_FORMAT,
        "version": 1,
        "fingerprint": table.spec_fingerprint,
        "sha256": hashlib.sha256(body.encode()).hexdigest(),
        "table": payload,
    }
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_text(path: Path, text: str, overwrite: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists; pass --overwrite to replace it")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def save_table(table: ExitProbTable, directory, overwrite: bool = False) -> Path:
    return write_text(Path(directory) / table_filename(table.spec_fingerprint), dump_table(table), overwrite)


def load_table(path) -> ExitProbTable:
    """Read a table file, verifying its checksum and fingerprint."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"{path}: unreadable table file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != TABLE_FORMAT:
        raise ChecksumError(f"{path}: not an exit-table file")
    payload = doc.get("table")
    if hashlib.sha256(_canonical(payload).encode()).hexdigest() != doc.get("sha256"):
        raise ChecksumError(f"{path}: checksum mismatch, file is corrupted")
    if payload.get("spec_fingerprint") != doc.get("fingerprint"):
        raise ChecksumError(f"{path}: fingerprint field disagrees with table body")
    try:
        return ExitProbTable.from_dict(payload)
    except ConfigurationError as exc:
        raise ChecksumError(f"{path}: {exc}") from exc


def _num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _ids(row) -> str:
    return ";".join(str(i) for i in np.flatnonzero(row))


def _header(kind: str, version: int, fields: dict) -> str:
    extra = " ".join(f"{k}={v}" for k, v in fields.items())
    return f"# ptrigger-{kind} v{version} {extra}\n"


def run_csv_text(rec: RunRecord) -> str:
    """One row per executed step.

    ``E_k`` is the mean control-error norm over agents at step ``k``;
    ``granted`` and ``triggered`` list agent ids separated by ``;``.
    """
    cfg = rec.config
    buf = io.StringIO()
    buf.write(_header("run", RUN_CSV_VERSION, {
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "scenario": cfg.scenario,
        "policy": cfg.policy.value,
        "N": cfg.N,
        "K": cfg.K,
    }))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for k in range(rec.steps_run):
        w.writerow([
            k,
            _num(k * cfg.dt),
            _num(rec.U[k]),
            int(rec.N_p[k]),
            int(rec.N_c[k]),
            int(rec.granted[k].sum()),
            _num(np.mean(rec.err_norm[k])),
            _ids(rec.granted[k]),
            _ids(rec.triggered[k]),
        ])
    return buf.getvalue()


def summary_json_text(rec: RunRecord, extra: Optional[dict] = None) -> str:
    doc = rec.summary()
    doc["csv_version"] = RUN_CSV_VERSION
    doc["config"] = rec.config.to_dict()
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=2, default=_plain) + "\n"


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def sweep_csv_text(records: Iterable[RunRecord], axis: str, base_fingerprint: str, master_seed: int) -> str:
    buf = io.StringIO()
    buf.write(_header("sweep", SWEEP_CSV_VERSION, {"fingerprint": base_fingerprint, "seed": master_seed, "axis": axis}))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for rec in records:
        cfg = rec.config
        tag = rec.tag or {"value": cfg.policy.value if axis == "policy" else getattr(cfg, axis), "policy": cfg.policy.value}
        if rec.error is not None:
            status = "error: " + rec.error
        elif rec.diverged:
            status = "diverged"
        else:
            status = "ok"
        w.writerow([
            axis,
            tag["value"],
            tag["policy"],
            cfg.seed,
            _num(rec.E_bar),
            _num(rec.U_bar),
            int(rec.diverged),
            "" if rec.divergence_step is None else rec.divergence_step,
            status,
        ])
    return buf.getvalue()
