"""Command-line entry point: ``ranknas run|ablate|bench-fill|report``."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from pathlib import Path

from .config import KNOB_FIELD, KNOBS, RunConfig, dump_config, load_config
from .errors import ConfigError
from .landmarks import BenchmarkCache, hparams_hash, train_standalone_many
from .reporting import (LONG_COLUMNS, write_ab_outputs, write_ablation_outputs, write_csv,
                        summarize)
from .search import run_baseline_vs_regularized, run_pipeline
from .space import builtin_space, enumerate_space

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
CACHE_ENV = "RANKNAS_CACHE"


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "out", None):
        changes["out"] = args.out
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be positive")
        changes["jobs"] = args.jobs
    if os.environ.get(CACHE_ENV):
        changes["cache"] = os.environ[CACHE_ENV]
    return dataclasses.replace(cfg, **changes)


def _prepare(cfg: RunConfig):
    data, splits = cfg.pipeline.data.build()
    return data, splits, BenchmarkCache(cfg.cache)


def _write_config(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))


def cmd_run(cfg: RunConfig, dry_run: bool = False) -> int:
    p = cfg.pipeline
    if dry_run:
        _log(f"config ok: space={p.space} seeds={list(p.seeds)} T={p.T} M={p.M} m={p.m} "
             f"lambda_max={p.lambda_max} schedule={p.schedule.value}")
        return EXIT_OK
    data, splits, cache = _prepare(cfg)
    t0 = time.perf_counter()
    ab = run_baseline_vs_regularized(p, data, splits, cache, jobs=cfg.jobs)
    _write_config(cfg)
    paths = write_ab_outputs(cfg.out, ab, cfg.to_dict())
    s = ab.summary()
    _log(f"baseline S-KdT {s['baseline_skdt_mean']:.4f}  regularized {s['regularized_skdt_mean']:.4f}"
         f"  delta {s['delta_skdt_mean']:+.4f}  ({s['n_positive']}/{s['n_seeds']} seeds improved)"
         f"  [{time.perf_counter() - t0:.1f}s]")
    for path in paths:
        _log(f"wrote {path}")
    return EXIT_OK


def ablation_settings(cfg: RunConfig, knob: str):
    """(value, PipelineConfig) for every grid point of ``knob``."""
    if knob not in KNOB_FIELD:
        raise ConfigError(f"unknown ablation knob {knob!r} (choose from {', '.join(KNOBS)})")
    grid = cfg.grids.get(knob)
    if not grid:
        raise ConfigError(f"empty grid for ablation knob {knob!r}")
    out = []
    for value in grid:
        try:
            out.append((value, cfg.pipeline.with_(**{KNOB_FIELD[knob]: value})))
        except ValueError as e:
            raise ConfigError(f"[ablate] {knob} = {value}: {e}") from None
    return out


def run_ablation(cfg: RunConfig, knob: str, data, splits, cache):
    results = []
    for value, pcfg in ablation_settings(cfg, knob):
        for seed in pcfg.seeds:
            rep = run_pipeline(pcfg, data, splits, cache, seed, jobs=cfg.jobs)
            _log(f"{knob}={value} seed={seed}: S-KdT {rep.skdt:.4f}")
            results.append((value, seed, rep))
    return results


def cmd_ablate(cfg: RunConfig, knob: str, dry_run: bool = False) -> int:
    settings = ablation_settings(cfg, knob)
    if dry_run:
        _log(f"config ok: {knob} grid {[v for v, _ in settings]} x {len(cfg.seeds)} seeds")
        return EXIT_OK
    data, splits, cache = _prepare(cfg)
    results = run_ablation(cfg, knob, data, splits, cache)
    _write_config(cfg)
    for path in write_ablation_outputs(cfg.out, knob, results, cfg.to_dict()):
        _log(f"wrote {path}")
    return EXIT_OK


def bench_fill(cfg: RunConfig, data, splits, cache) -> list:
    space = builtin_space(cfg.space)
    return train_standalone_many(space, list(enumerate_space(space)), data, splits,
                                 cfg.pipeline.hparams, cache, jobs=cfg.jobs)


def cmd_bench_fill(cfg: RunConfig, dry_run: bool = False) -> int:
    space = builtin_space(cfg.space)
    if dry_run:
        _log(f"config ok: would fill {space.size} architectures of {space.name!r} into {cfg.cache}")
        return EXIT_OK
    data, splits, cache = _prepare(cfg)
    t0 = time.perf_counter()
    results = bench_fill(cfg, data, splits, cache)
    hh = hparams_hash(cfg.pipeline.hparams, data, splits)
    n = len(cache.records(space.name, hh, cfg.pipeline.hparams.standalone_seed))
    best = max(results, key=lambda r: r.valid_acc)
    _log(f"{space.name}: {n}/{space.size} architectures cached in {cfg.cache} "
         f"[{time.perf_counter() - t0:.1f}s]; best {best.arch} at {100 * best.valid_acc:.2f}%")
    return EXIT_OK


def cmd_report(out_dir, dry_run: bool = False) -> int:
    table, long_rows = summarize(out_dir)
    if dry_run:
        return EXIT_OK
    sys.stdout.write(table)
    path = write_csv(Path(out_dir) / "summary_long.csv", LONG_COLUMNS, long_rows)
    _log(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranknas",
        description="Landmark-regularized weight-sharing NAS at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, metavar="PATH",
                       help="experiment config file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--jobs", type=int, metavar="N",
                       help="parallel stand-alone trainings (default 1, bit-exact)")
        p.add_argument("--dry-run", action="store_true", help="validate inputs and exit")

    common(sub.add_parser("run", help="baseline vs regularized A/B over the seed list"))
    ab = sub.add_parser("ablate", help="sweep one knob's grid over the seed list")
    common(ab)
    ab.add_argument("--knob", required=True, choices=KNOBS)
    common(sub.add_parser("bench-fill", help="stand-alone train every architecture of the space"))
    rp = sub.add_parser("report", help="summarize the CSVs in an output directory")
    common(rp, config_required=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            out = args.out or (load_config(args.config).out if args.config else None)
            if out is None:
                raise ConfigError("report needs --out DIR or --config PATH")
            return cmd_report(out, args.dry_run)
        cfg = resolve_config(args)
        if args.command == "run":
            return cmd_run(cfg, args.dry_run)
        if args.command == "ablate":
            return cmd_ablate(cfg, args.knob, args.dry_run)
        return cmd_bench_fill(cfg, args.dry_run)
    except ConfigError as e:
        _log(f"config error: {e}")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        _log("interrupted")
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - every other failure is a runtime error
        _log(f"error: {type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
