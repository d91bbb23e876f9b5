"""``ptrigger`` command line.

Exit codes: 0 on success (a DIVERGED run still counts as success), 2 for
configuration or usage errors, 3 for runtime errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import yaml

from . import io as pio
from .config import ExperimentConfig, load_config, preset_names, preset_text
from .errors import ConfigurationError, PTError, TableMismatchError
from .scheduling import Policy
from .simulation import (
    Simulator,
    build_fleet,
    build_tables,
    expected_fingerprints,
    sweep,
)

OUT_ENV = "PTRIGGER_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("ptrigger")


class UsageError(Exception):
    pass


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "ptrigger-out")


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def _load(args) -> ExperimentConfig:
    overrides = _parse_set(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "policy", None) is not None:
        overrides["policy"] = args.policy
    return load_config(args.config, overrides)


def _parse_values(text: str, axis: str) -> list:
    vals = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if axis != "policy" and ".." in part:
            lo, hi = part.split("..", 1)
            vals.extend(range(int(lo), int(hi) + 1))
        elif axis == "policy":
            vals.append(Policy.parse(part).value)
        else:
            vals.append(int(part))
    if not vals:
        raise UsageError("sweep needs at least one value")
    return vals


def _workers(n):
    return n if n is not None else (os.cpu_count() or 1)


def _load_tables(cfg, fleet, args) -> dict:
    """Tables for every agent of ``cfg``, read from disk."""
    wanted = list(dict.fromkeys(expected_fingerprints(cfg, fleet)))
    if args.table:
        tables = [pio.load_table(p) for p in args.table]
        found = {t.spec_fingerprint: t for t in tables}
        missing = [fp for fp in wanted if fp not in found]
        if missing:
            if not args.allow_mismatch:
                raise TableMismatchError(
                    f"table fingerprint does not match the config ({missing[0][:16]} expected); "
                    "rebuild with `ptrigger build-table` or pass --allow-mismatch"
                )
            if len(tables) != 1:
                raise UsageError("--allow-mismatch needs exactly one --table file")
            log.warning("using mismatched table %s for all agents", tables[0].spec_fingerprint[:16])
            found = {fp: tables[0] for fp in wanted}
        return found
    tdir = Path(args.tables or Path(args.out) / "tables")
    found = {}
    for fp in wanted:
        path = tdir / pio.table_filename(fp)
        if not path.is_file():
            raise TableMismatchError(
                f"no exit table {path.name} in {tdir}; run `ptrigger build-table {args.config}` first"
            )
        t = pio.load_table(path)
        if t.spec_fingerprint != fp and not args.allow_mismatch:
            raise TableMismatchError(f"{path}: fingerprint mismatch")
        found[fp] = t
    return found


def cmd_build_table(args) -> int:
    exp = _load(args)
    cfg = exp.run
    fleet = build_fleet(cfg)
    out = Path(args.out) / "tables" if args.tables is None else Path(args.tables)
    t0 = time.perf_counter()
    for fp in dict.fromkeys(expected_fingerprints(cfg, fleet)):
        path = out / pio.table_filename(fp)
        if path.exists() and not args.overwrite:
            raise FileExistsError(f"{path} exists; pass --overwrite to replace it")
    tables = build_tables(cfg, fleet, workers=_workers(args.workers))
    for fp, table in tables.items():
        path = pio.save_table(table, out, overwrite=args.overwrite)
        v = table.values
        print(
            f"{path}: grid {table.norm_grid.size} x {table.max_steps + 1} steps, "
            f"{table.samples} samples, H(0,{table.max_steps})={v[0, -1]:.4f}"
        )
    print(f"built {len(tables)} table(s) in {time.perf_counter() - t0:.2f} s")
    return EXIT_OK


def cmd_run(args) -> int:
    exp = _load(args)
    cfg = exp.run
    fleet = build_fleet(cfg)
    tables = _load_tables(cfg, fleet, args) if cfg.policy.predictive else None
    out = Path(args.out)
    stem = f"run-{cfg.fingerprint()}-s{cfg.seed}"
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    for p in (csv_path, json_path):
        if p.exists() and not args.overwrite:
            raise FileExistsError(f"{p} exists; pass --overwrite to replace it")
    rec = Simulator(cfg, fleet, tables).run()
    pio.write_text(csv_path, pio.run_csv_text(rec), overwrite=args.overwrite)
    pio.write_text(json_path, pio.summary_json_text(rec), overwrite=args.overwrite)
    status = f"DIVERGED at step {rec.divergence_step}" if rec.diverged else "ok"
    print(f"{cfg.policy.value} N={cfg.N} K={cfg.K} seed={cfg.seed}: E_bar={rec.E_bar:.6g} U_bar={rec.U_bar:.6g} [{status}]")
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    exp = _load(args)
    cfg = exp.run
    values = _parse_values(args.values, args.axis)
    policies = None if args.axis == "policy" else list(exp.policies)
    out = Path(args.out)
    path = out / f"sweep-{cfg.fingerprint()}-{args.axis}.csv"
    if path.exists() and not args.overwrite:
        raise FileExistsError(f"{path} exists; pass --overwrite to replace it")
    build_fleet(cfg)
    records = sweep(cfg, args.axis, values, workers=_workers(args.workers), policies=policies)
    pio.write_text(path, pio.sweep_csv_text(records, args.axis, cfg.fingerprint(), cfg.seed), overwrite=args.overwrite)
    bad = sum(r.error is not None for r in records)
    div = sum(r.diverged for r in records)
    print(f"{len(records)} runs ({div} diverged, {bad} failed); wrote {path}")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        sys.stdout.write(preset_text(args.name))
    else:
        for name in preset_names():
            print(name)
    return EXIT_OK


def cmd_validate(args) -> int:
    exp = _load(args)
    cfg = exp.run
    fleet = build_fleet(cfg)
    print(f"{exp.source}: ok")
    print(f"  scenario {cfg.scenario}, N={cfg.N}, K={cfg.K}, policy {cfg.policy.value}, steps {cfg.n_steps}")
    print(f"  closed-loop spectral radius {fleet.spectral_radius():.6f}")
    print(f"  config fingerprint {cfg.fingerprint()}")
    fps = list(dict.fromkeys(expected_fingerprints(cfg, fleet)))
    print(f"  exit tables needed: {len(fps)} ({', '.join(fp[:16] for fp in fps[:4])}{', ...' if len(fps) > 4 else ''})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptrigger", description="Predictive triggering for multi-agent networked control.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("config", help="config file or preset name")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry (dots for nesting)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        if out:
            sp.add_argument("--out", default=_default_out(), help=f"output directory (default: ${OUT_ENV} or ./ptrigger-out)")
            sp.add_argument("--overwrite", action="store_true", help="replace existing output files")
            sp.add_argument("--workers", type=int, help="parallel workers (default: all cores)")

    sp = sub.add_parser("build-table", help="tabulate exit probabilities for a config")
    common(sp)
    sp.add_argument("--tables", help="table directory (default: OUT/tables)")
    sp.set_defaults(func=cmd_build_table, policy=None)

    sp = sub.add_parser("run", help="simulate one config")
    common(sp)
    sp.add_argument("--policy", help="override the policy (PT, PT*, ET1, ET2)")
    sp.add_argument("--tables", help="table directory (default: OUT/tables)")
    sp.add_argument("--table", action="append", help="explicit table file(s)")
    sp.add_argument("--allow-mismatch", action="store_true", help="accept a table built for another error process")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a config over several N, K or policy values")
    common(sp)
    sp.add_argument("--axis", required=True, choices=("N", "K", "policy"))
    sp.add_argument("--values", required=True, help="comma list; ranges like 3..10 allowed")
    sp.set_defaults(func=cmd_sweep, policy=None)

    sp = sub.add_parser("presets", help="list shipped presets or print one")
    sp.add_argument("name", nargs="?")
    sp.set_defaults(func=cmd_presets)

    sp = sub.add_parser("validate", help="check a config without writing anything")
    common(sp, out=False)
    sp.set_defaults(func=cmd_validate, policy=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, TableMismatchError, FileExistsError) as exc:
        print(f"ptrigger: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PTError, OSError) as exc:
        print(f"ptrigger: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
