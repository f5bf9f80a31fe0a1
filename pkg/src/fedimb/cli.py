"""Command-line entry point: ``fedimb run | compare | stats``.

Exit codes: 0 success, 1 unexpected failure, 2 config error, 3 data error,
4 training divergence.  Every error message names the failing stage.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .augment import METHODS, DivergenceError
from .config import ConfigError, ExperimentConfig, load_config
from .dataio import DataError, Schema, load_csv, load_schema, round_half_up
from .experiment import (
    STATION_COLUMNS,
    SUMMARY_COLUMNS,
    SUMMARY_LABELS,
    TABLE_ORDER,
    StageError,
    _table,
    load_manifest_config,
    run_experiment,
    summary_row,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(cause, (DataError, OSError)):
        return EXIT_DATA
    return EXIT_FAIL


def _fail(exc: BaseException, stage: str = "") -> int:
    msg = str(exc) if isinstance(exc, StageError) or not stage else f"stage {stage}: {exc}"
    print(f"fedimb: error: {msg}", file=sys.stderr)
    return _exit_code(exc)


def _resolve(path: str, args) -> ExperimentConfig:
    """Load a config file or a run manifest, then apply command-line overrides."""
    cfg = load_manifest_config(path) if path.endswith(".json") else load_config(path)
    if args.seed is not None:
        try:
            cfg = cfg.with_seed(args.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.parallel_clients is not None:
        if args.parallel_clients < 1:
            raise ConfigError("--parallel-clients must be >= 1")
        cfg = cfg.replace(federation=dataclasses.replace(cfg.federation, parallel_clients=args.parallel_clients))
    return cfg


def _logger(quiet: bool):
    if quiet:
        return lambda msg: None
    return lambda msg: print(msg, file=sys.stderr)


def cmd_run(args) -> int:
    try:
        cfg = _resolve(args.config, args)
    except ConfigError as exc:
        return _fail(exc, "config")
    if args.out_dir:
        out = Path(args.out_dir)
    elif args.config.endswith(".json"):
        out = Path(args.config).parent / "replay"
    else:
        out = Path("runs") / Path(args.config).stem
    try:
        result = run_experiment(cfg, out, _logger(args.quiet))
    except (StageError, OSError) as exc:
        return _fail(exc, "output")
    if not args.quiet:
        print(_table(SUMMARY_COLUMNS, [summary_row(cfg.experiment.method, result.summary)]), end="")
        print(f"outputs written to {out}", file=sys.stderr)
    return EXIT_OK


def _parse_methods(text: str) -> list[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    if len(set(methods)) != len(methods):
        raise ConfigError("duplicate method in --methods")
    return methods


def _data_key(cfg: ExperimentConfig):
    return (cfg.data, cfg.schema, cfg.blobs if cfg.data.source == "blobs" else None, cfg.split)


def _one_run(job):
    cfg, out = job
    return run_experiment(cfg, out)


def cmd_compare(args) -> int:
    try:
        configs = [_resolve(p, args) for p in args.configs]
        if args.methods:
            methods = _parse_methods(args.methods)
            if len(configs) != 1:
                raise ConfigError("--methods takes exactly one base config")
            configs = [configs[0].with_method(m) for m in methods]
        if len(configs) < 2:
            raise ConfigError("compare needs at least two runs")
        if len({_data_key(c) for c in configs}) != 1:
            raise ConfigError("runs use mismatched data sources; compare needs one shared dataset and split")
        if len({c.experiment.seed for c in configs}) != 1:
            raise ConfigError("runs use different master seeds")
    except ConfigError as exc:
        return _fail(exc, "config")

    out = Path(args.out_dir or "runs/compare")
    names = [c.experiment.method for c in configs]
    if len(set(names)) != len(names):
        names = [f"{i + 1}_{n}" for i, n in enumerate(names)]
    jobs = [(c, out / n) for c, n in zip(configs, names)]
    log = _logger(args.quiet)
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_one_run, jobs))
        else:
            results = []
            for cfg, path in jobs:
                log(f"== {cfg.experiment.method} ==")
                results.append(run_experiment(cfg, path, log))
    except (StageError, OSError) as exc:
        return _fail(exc, "compare")

    rank = {m: i for i, m in enumerate(TABLE_ORDER)}
    order = sorted(range(len(results)), key=lambda i: (rank[configs[i].experiment.method], i))
    table = _table(SUMMARY_COLUMNS, [summary_row(configs[i].experiment.method, results[i].summary) for i in order])
    grid = []
    for i in order:
        label = SUMMARY_LABELS[configs[i].experiment.method]
        for sid, split_name, rep in results[i].station_reports:
            grid.append([label, sid, split_name, rep.accuracy, rep.loss, rep.auc, rep.g_mean])
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table, encoding="utf-8")
    (out / "stations.csv").write_text(_table(STATION_COLUMNS, grid), encoding="utf-8")
    if not args.quiet:
        print(table, end="")
    return EXIT_OK


def station_stats(partitions) -> list[tuple[str, int, int, float]]:
    """(station, rain, no-rain, imbalance ratio rounded to 2 places) per station."""
    rows = []
    for p in partitions:
        rain, dry = p.counts
        rows.append((p.station_id, rain, dry, round_half_up(p.imbalance_ratio, 2)))
    return rows


def cmd_stats(args) -> int:
    try:
        schema = load_schema(args.schema) if args.schema else Schema()
    except (DataError, OSError) as exc:
        return _fail(ConfigError(str(exc)), "schema")
    try:
        parts = load_csv(args.csv, schema)
        rows = station_stats(parts)
    except (DataError, OSError, ValueError) as exc:
        return _fail(DataError(str(exc)), "ingest")
    rain = sum(r[1] for r in rows)
    dry = sum(r[2] for r in rows)
    print(f"{'station':>10} {'rain':>8} {'no_rain':>8} {'ratio':>6}")
    for sid, r, d, ratio in rows:
        print(f"{sid:>10} {r:>8} {d:>8} {ratio:>6.2f}")
    print(f"{'total':>10} {rain:>8} {dry:>8} {'':>6}")
    print(f"grand total: {rain + dry}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedimb", description="Federated rain-prediction experiments with class-imbalance augmentation."
    )
    parser.add_argument("--version", action="version", version=f"fedimb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out-dir", default=None, help="output directory")
    common.add_argument("--parallel-clients", type=int, default=None, help="client threads per round")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_run = sub.add_parser("run", parents=[common], help="run one experiment from a config or manifest.json")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", parents=[common], help="run several methods on one dataset")
    p_cmp.add_argument("configs", nargs="+")
    p_cmp.add_argument("--methods", default=None, help="comma-separated methods applied to a single base config")
    p_cmp.add_argument("--jobs", type=int, default=1, help="experiments to run in parallel processes")
    p_cmp.set_defaults(func=cmd_compare)

    p_stats = sub.add_parser("stats", help="per-station class counts and imbalance ratios")
    p_stats.add_argument("csv")
    p_stats.add_argument("--schema", default=None, help="config file with a [schema] section")
    p_stats.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
