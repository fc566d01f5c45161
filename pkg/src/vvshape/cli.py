"""Command line: ``vvshape {train,sweep,export,check}``.

Settings resolve as command-line flag > ``--config`` INI file > default.
The INI file has ``[train]`` and ``[sweep]`` sections whose keys match the
long flag names with dashes replaced by underscores.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from .checks import run_checks
from .cpe import export_partition_grid
from .constellation import export_tsv
from .sweep import SweepGrid, export_results, run_sweep, write_manifest
from .system import System, load_system, save_system
from .trainer import TrainConfig, TrainingError, save_run, to_system, train

# flag name -> TrainConfig field
TRAIN_FLAGS = {
    "mu": "mu", "partitions": "L", "half_window": "K", "snr_db": "snr_db",
    "linewidth_hz": "linewidth_hz", "symbol_rate": "symbol_rate_baud",
    "batches": "batches", "batch_len": "batch_len", "lr": "lr",
    "lr_decay": "lr_decay", "lr_decay_every": "lr_decay_every",
    "activation": "activation", "smooth_radius": "smooth_radius", "seed": "seed",
    "bits": "m", "clip_norm": "clip_norm",
}
BASELINES = {"qam64-hard2": lambda: System.qam_hard(2, 6)}


class UsageError(Exception):
    pass


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    items = [t for t in str(text).replace(" ", "").split(",") if t]
    if not items:
        raise UsageError("empty list")
    return tuple(float(t) for t in items)


def _coerce(field_type, value):
    if value is None or value == "":
        return None
    t = str(field_type)
    if "tuple" in t:
        parts = [v.strip() for v in str(value).split(",") if v.strip()]
        return tuple(int(v) if v.lstrip("-").isdigit() else float(v) for v in parts)
    if "bool" in t:
        return str(value).lower() in ("1", "true", "yes", "on")
    if "int" in t:
        return int(float(value))
    if "float" in t:
        return float(value)
    return value


def read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        if not Path(path).is_file():
            raise UsageError(f"config file {path} not found")
        cp.read(path)
    return cp


def resolve_train_config(args) -> TrainConfig:
    cp = read_config(args.config)
    section = cp["train"] if cp.has_section("train") else {}
    types = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    # the file may use flag names or field names (as in the echoed config.ini)
    for name in types:
        if name.lower() in section:
            values[name] = _coerce(types[name], section[name.lower()])
    for flag, name in TRAIN_FLAGS.items():
        if flag in section:
            values[name] = _coerce(types[name], section[flag])
        cli = getattr(args, flag, None)
        if cli is not None:
            values[name] = _coerce(types[name], cli)
    return TrainConfig(**values)


def resolve_grid(args) -> SweepGrid:
    cp = read_config(args.config)
    section = cp["sweep"] if cp.has_section("sweep") else {}
    values = {}
    for key, conv in (("snrs", _floats), ("linewidths", _floats), ("reps", int),
                      ("symbols", int), ("seed", int)):
        raw = getattr(args, key, None)
        if raw is None and key in section:
            raw = section[key]
        if raw is not None:
            try:
                values[key] = conv(raw)
            except (UsageError, ValueError) as exc:
                raise UsageError(f"--{key}: {exc}") from None
    mapping = {"snrs": "snrs_db", "linewidths": "linewidths_hz", "symbols": "symbols_per_rep"}
    kw = {mapping.get(k, k): v for k, v in values.items()}
    try:
        return SweepGrid(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _echo_config(path, section, data):
    cp = configparser.ConfigParser()
    cp[section] = {k: "" if v is None else (",".join(map(str, v)) if isinstance(v, tuple) else str(v))
                   for k, v in data.items()}
    with open(path, "w") as fh:
        cp.write(fh)


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(out / "config.ini", "train", asdict(cfg))
    every = args.checkpoint_every or 0

    def checkpoint(b, loss, params):
        if every and (b + 1) % every == 0:
            save_system(to_system(params, cfg), out / "checkpoints" / f"{b + 1:06d}")

    if cfg.batches == 0:
        from .trainer import initial_params
        save_system(to_system(initial_params(cfg), cfg), out / "checkpoints" / "000000")
    try:
        report = train(cfg, callback=checkpoint)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    paths = save_run(report, out)
    manifest = {"config": asdict(cfg), "seed": cfg.seed,
                "artifacts": {k: _sha(p) for k, p in sorted(paths.items())}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"trained {report.system.system_id}: final loss {report.losses[-1] if report.losses else float('nan'):.4f}"
          f" -> {out}")
    return 0


def _sha(path):
    from .sweep import file_hash
    return file_hash(path)


def cmd_sweep(args) -> int:
    grid = resolve_grid(args)
    if args.baseline:
        if args.baseline not in BASELINES:
            raise UsageError(f"unknown baseline {args.baseline!r}; choose from {sorted(BASELINES)}")
        system = BASELINES[args.baseline]()
        artifacts = []
    elif args.system:
        system = load_system(args.system)
        artifacts = sorted(p for p in Path(args.system).glob("*.tsv")) + [Path(args.system) / "system.ini"]
    else:
        raise UsageError("need --system DIR or --baseline NAME")
    result = run_sweep(system, grid, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_results(result, out)
    write_manifest(out.with_suffix(".manifest.json"), result, grid, artifacts,
                   {"activation": system.activation, "mu": system.vv.mu,
                    "half_window": system.vv.half_window, "hard_rings": system.hard_rings})
    print(f"{result.system_id}: {len(result.rows)} cells -> {out}")
    return 0


def cmd_export(args) -> int:
    system = BASELINES[args.baseline]() if args.baseline else load_system(args.system)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_tsv(system.constellation, out / "constellation.tsv")
    export_partition_grid(system.partition, out / "partition_grid.tsv", system.activation)
    print(f"exported {system.system_id} -> {out}")
    return 0


def cmd_check(args) -> int:
    results = run_checks(args.filter)
    if not results:
        print(f"no check matches {args.filter!r}", file=sys.stderr)
        return 2
    failed = [r[0] for r in results if not r[1]]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vvshape", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="end-to-end training run")
    t.add_argument("--config")
    t.add_argument("--out", default="runs/train")
    t.add_argument("--checkpoint-every", type=int, default=0)
    for flag in TRAIN_FLAGS:
        t.add_argument("--" + flag.replace("_", "-"), dest=flag, default=None)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="BMI over SNR x linewidth")
    s.add_argument("--config")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--system", help="run directory written by 'train'")
    g.add_argument("--baseline", help="built-in system, e.g. qam64-hard2")
    s.add_argument("--snrs")
    s.add_argument("--linewidths")
    s.add_argument("--reps", type=int)
    s.add_argument("--symbols", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="runs/sweep.txt")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("export", help="constellation and partition-grid TSV files")
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--system")
    g.add_argument("--baseline")
    e.add_argument("--out", default="runs/export")
    e.set_defaults(func=cmd_export)

    c = sub.add_parser("check", help="fast invariant suite")
    c.add_argument("--filter")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
