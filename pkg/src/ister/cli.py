"""Command-line entry points: train, predict, explain, synth, bench.

Every subcommand validates its inputs before writing anything, writes all
artifacts atomically, and finishes with one JSON line on stdout. Exit
codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from .bench import run_bench, save_bench
from .config import RunConfig, parse_run_config
from .data import SeriesTable, SplitSpec, load_csv, synth_multiperiodic, windows
from .errors import ConfigError, DataError, IsterError, NumericError, ShapeError
from .interpret import EXPORT_FORMATS, export_report, extract_contributions
from .ioutil import atomic_write_text
from .model import IsterModel, ModelConfig, ablation_variant, load_checkpoint, save_checkpoint
from .training import TrainConfig, prepare_splits, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _load_table(config: RunConfig) -> SeriesTable:
    if config.csv_path is not None:
        return load_csv(
            config.csv_path,
            has_header=config.has_header,
            timestamp_column=config.timestamp_column,
        )
    s = config.synth
    return synth_multiperiodic(
        total=s.total,
        n_channels=s.channels,
        periods=list(s.periods),
        amplitudes=list(s.amplitudes),
        noise_sd=s.noise_sd,
        trend_slope=s.trend_slope,
        seed=s.seed,
    )


def _split_spec(config: RunConfig) -> SplitSpec:
    if config.split_counts is not None:
        return SplitSpec(fractions=None, counts=config.split_counts)
    if config.split_fractions is not None:
        return SplitSpec(fractions=config.split_fractions)
    return SplitSpec()


def cmd_train(args) -> int:
    config = parse_run_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    variant = config.variant if args.variant is None else args.variant
    out_dir = config.out_dir if args.out is None else args.out

    table = _load_table(config)
    model_fields = dict(config.model_fields)
    declared_n = model_fields.pop("N", None)
    if declared_n is not None and declared_n != table.n_channels:
        raise ConfigError(
            f"model.N = {declared_n} but dataset {table.name!r} has {table.n_channels} channels"
        )
    base_config = ModelConfig(N=table.n_channels, **model_fields)
    model_config = ablation_variant(base_config, variant)
    train_config = TrainConfig(seed=seed, **config.train_fields)
    split, scaling = prepare_splits(
        table,
        _split_spec(config),
        T=model_config.T,
        S=model_config.S,
        zscore=config.zscore,
    )

    model = IsterModel(model_config, seed=seed)
    model, report = train(model, split, train_config)

    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(model, os.path.join(out_dir, "checkpoint.json"))
    report.save(os.path.join(out_dir, "train_report.json"))
    if scaling is not None:
        atomic_write_text(
            os.path.join(out_dir, "scaling.json"),
            json.dumps(
                {"mean": scaling.mean.tolist(), "sd": scaling.sd.tolist()},
                sort_keys=True,
                indent=1,
            ),
        )
    metrics = {
        "variant": variant,
        "seed": seed,
        "best_epoch": report.best_epoch,
        "epochs_run": len(report.val_loss),
        "val_mse_best": report.val_loss[report.best_epoch],
        "test_mse": report.test_mse,
        "test_mae": report.test_mae,
    }
    atomic_write_text(
        os.path.join(out_dir, "metrics.json"), json.dumps(metrics, sort_keys=True, indent=1)
    )
    _emit(metrics)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    table = load_csv(args.input, has_header=True, timestamp_column=args.timestamp_column)
    cfg = model.config
    if table.n_channels != cfg.N:
        raise DataError(
            f"checkpoint expects {cfg.N} channels, input {args.input!r} has {table.n_channels}"
        )
    if len(table) < cfg.T:
        raise DataError(
            f"input needs at least T={cfg.T} rows, {args.input!r} has {len(table)}"
        )
    lookback = table.values[-cfg.T :]
    forecast = model.forward(lookback).prediction

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.channel_names)
    for row in forecast:
        writer.writerow([f"{v:.12g}" for v in row])
    atomic_write_text(args.out, buf.getvalue())
    _emit({"out": args.out, "rows": int(forecast.shape[0]), "channels": cfg.N})
    return EXIT_OK


def cmd_explain(args) -> int:
    model = load_checkpoint(args.checkpoint)
    table = load_csv(args.dataset, has_header=True, timestamp_column=args.timestamp_column)
    cfg = model.config
    if table.n_channels != cfg.N:
        raise DataError(
            f"checkpoint expects {cfg.N} channels, dataset {args.dataset!r} has {table.n_channels}"
        )
    wins = windows(table, cfg.T, cfg.S, stride=cfg.S)
    layer = "last" if args.layer == "last" else int(args.layer)
    report = extract_contributions(
        model, wins, layer=layer, branch=args.branch, channel_names=table.channel_names
    )
    export_report(report, args.out, format=args.format)
    _emit({"out": args.out, "windows": report.window_count, "format": args.format})
    return EXIT_OK


def cmd_synth(args) -> int:
    table = synth_multiperiodic(
        total=args.total,
        n_channels=args.channels,
        periods=[float(p) for p in args.periods.split(",")],
        amplitudes=[float(a) for a in args.amplitudes.split(",")],
        noise_sd=args.noise_sd,
        trend_slope=args.trend_slope,
        seed=args.seed,
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.channel_names)
    for row in table.values:
        writer.writerow([f"{v:.12g}" for v in row])
    atomic_write_text(args.out, buf.getvalue())
    _emit({"out": args.out, "rows": len(table), "channels": table.n_channels})
    return EXIT_OK


def cmd_bench(args) -> int:
    mechanisms = [m.strip() for m in args.mechanisms.split(",") if m.strip()]
    grid = [int(x) for x in args.grid.split(",") if x.strip()]
    results = run_bench(mechanisms, grid, D=args.d, reps=args.reps, heads=args.heads)
    if args.out:
        save_bench(results, args.out)
    _emit({r.mechanism: r.slope for r in results})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ister", description="Seasonal-trend dual-encoder forecasting toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a run config file")
    p_train.add_argument("--config", required=True, help="key = value run config path")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--variant", default=None, help="override ablation variant")
    p_train.add_argument("--out", default=None, help="override output directory")
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="forecast from the last T rows of a CSV")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--input", required=True, help="input CSV with header")
    p_pred.add_argument("--out", required=True, help="forecast CSV path")
    p_pred.add_argument("--timestamp-column", default=None)
    p_pred.set_defaults(func=cmd_predict)

    p_exp = sub.add_parser("explain", help="export contribution scores for a dataset")
    p_exp.add_argument("--checkpoint", required=True)
    p_exp.add_argument("--dataset", required=True, help="CSV to take windows from")
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--format", default="json", choices=EXPORT_FORMATS)
    p_exp.add_argument("--layer", default="last", help='"last" or a block index')
    p_exp.add_argument("--branch", default="both", choices=("both", "channel", "period"))
    p_exp.add_argument("--timestamp-column", default=None)
    p_exp.set_defaults(func=cmd_explain)

    p_syn = sub.add_parser("synth", help="generate a synthetic multi-periodic CSV")
    p_syn.add_argument("--out", required=True)
    p_syn.add_argument("--total", type=int, required=True)
    p_syn.add_argument("--channels", type=int, required=True)
    p_syn.add_argument("--periods", required=True, help="comma-separated, e.g. 24,12")
    p_syn.add_argument("--amplitudes", required=True, help="comma-separated, e.g. 1.0,0.5")
    p_syn.add_argument("--noise-sd", type=float, default=0.0)
    p_syn.add_argument("--trend-slope", type=float, default=0.0)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.set_defaults(func=cmd_synth)

    p_bench = sub.add_parser("bench", help="op-count and wall-time growth over token grids")
    p_bench.add_argument("--mechanisms", default="dot,multihead")
    p_bench.add_argument("--grid", default="16,32,64,128,256")
    p_bench.add_argument("--d", type=int, default=64)
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--heads", type=int, default=8)
    p_bench.add_argument("--out", default=None, help="optional JSON results path")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IsterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
