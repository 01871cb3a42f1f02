"""Command-line interface: generate / train / evaluate / ablate / inspect.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
abort.  CDEHAWKES_OUT overrides the default output root; CDEHAWKES_WORKERS
declares the worker budget (recorded in the manifest; the numerical engine
itself is single-worker deterministic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, PRESETS, build_config, config_to_dict
from .data import Dataset, DatasetError, load_dataset, save_dataset, split_dataset
from .hawkes import ExpHawkesParams, StationarityError, generate_dataset
from .model import load_checkpoint, save_checkpoint
from .report import (plot_ablation, plot_class_diversity, plot_training_curve,
                     write_csv_rows, write_manifest, write_metrics)
from .training import ablate_integration, evaluate, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _out_dir(arg: str | None, default_name: str) -> Path:
    root = Path(os.environ.get("CDEHAWKES_OUT", "."))
    out = Path(arg) if arg else root / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers() -> int:
    raw = os.environ.get("CDEHAWKES_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CDEHAWKES_WORKERS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("CDEHAWKES_WORKERS must be >= 1")
    return n


def _parse_rates(text: str, name: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x != ""])
    except ValueError:
        raise ConfigError(f"--{name} expects comma-separated numbers, got {text!r}")


def _kernel_matrix(values: np.ndarray, k: int, name: str, diagonal_default: bool) -> np.ndarray:
    """Scalar or K values place self-interaction terms on the diagonal (for
    excitation) or broadcast everywhere (decay); K*K values fill row-major."""
    if values.size == 1:
        return np.diag(np.full(k, values[0])) if diagonal_default else np.full((k, k), values[0])
    if values.size == k:
        return np.diag(values) if diagonal_default else np.tile(values[:, None], (1, k))
    if values.size == k * k:
        return values.reshape(k, k)
    raise ConfigError(f"--{name} expects 1, {k} or {k * k} values, got {values.size}")


def cmd_generate(args) -> int:
    mu = _parse_rates(args.mu, "mu")
    k = mu.size
    alpha = _kernel_matrix(_parse_rates(args.alpha, "alpha"), k, "alpha", diagonal_default=True)
    beta = _kernel_matrix(_parse_rates(args.beta, "beta"), k, "beta", diagonal_default=False)
    try:
        params = ExpHawkesParams(mu, alpha, beta, args.horizon)
    except ValueError as e:
        raise ConfigError(str(e))
    params.check_stationary()

    dataset, n_empty = generate_dataset(params, args.n, args.seed)
    if len(dataset) == 0:
        print("error: every generated sequence was empty; raise mu or the horizon",
              file=sys.stderr)
        return EXIT_DATA
    train_ds, test_ds = split_dataset(dataset, args.train_fraction, args.seed)
    out = _out_dir(args.out, "dataset")
    save_dataset(train_ds, out / "train.json")
    save_dataset(test_ds, out / "test.json")
    sidecar = {
        "generator": params.to_dict(),
        "seed": args.seed,
        "n_requested": args.n,
        "n_empty_dropped": n_empty,
        "train_fraction": args.train_fraction,
        "branching_spectral_radius": params.branching_spectral_radius(),
    }
    with open(out / "params.json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    write_manifest(out, "generate", sidecar, args.seed,
                   [out / "train.json", out / "test.json"],
                   ["train.json", "test.json", "params.json"])
    print(f"wrote {len(train_ds)} train / {len(test_ds)} test sequences to {out}"
          + (f" ({n_empty} empty draws dropped)" if n_empty else ""))
    return EXIT_OK


def _load_or_fail(path: str, jitter: float = 0.0, time_scale: float = 1.0) -> Dataset:
    if not Path(path).exists():
        raise DatasetError(f"dataset not found: {path}")
    return load_dataset(path, jitter=jitter, time_scale=time_scale)


def cmd_train(args) -> int:
    overrides = {
        "learning_rate": args.lr, "batch_size": args.batch_size,
        "max_iter": args.max_iter, "seed": args.seed, "substeps": args.substeps,
        "patience": args.patience,
    }
    cfg = build_config(args.preset, args.config, overrides)
    data = _load_or_fail(args.data, jitter=args.jitter, time_scale=cfg.time_scale)
    out = _out_dir(args.out, "run")

    result = train(data, cfg)
    save_checkpoint(result.params, str(out / "checkpoint"))
    write_csv_rows(result.curve, out / "curve.csv")
    plot_training_curve(result.curve, out / "training_curve.png")
    write_manifest(out, "train", {**config_to_dict(cfg), "workers": _workers()},
                   cfg.seed, [args.data],
                   ["checkpoint.bin", "checkpoint.json", "curve.csv", "training_curve.png"])
    if result.aborted:
        print("error: training aborted on non-finite loss; last-good checkpoint kept",
              file=sys.stderr)
        return EXIT_NUMERIC
    last = result.curve[-1] if result.curve else {}
    print(f"trained {result.iterations} iterations"
          + (f"; final epoch loss {last['loss']:.4f}" if last else "")
          + (" (early stop)" if result.stopped_early else ""))
    return EXIT_OK


def _check_types_match(params, data: Dataset) -> None:
    if params.cfg.num_types != data.num_types:
        raise DatasetError(
            f"checkpoint has {params.cfg.num_types} event types but the dataset "
            f"declares {data.num_types}")


def cmd_evaluate(args) -> int:
    cfg = build_config(args.preset, args.config, {"seed": args.seed})
    params = load_checkpoint(args.checkpoint)
    data = _load_or_fail(args.data)
    _check_types_match(params, data)
    out = _out_dir(args.out, "eval")
    report = evaluate(params, data, cfg)
    write_metrics(report.to_dict(), out)
    plot_class_diversity(report.classes_in_test, report.classes_hit,
                         out / "class_diversity.png")
    write_manifest(out, "evaluate", config_to_dict(cfg), cfg.seed, [args.data],
                   ["metrics.json", "metrics.csv", "class_diversity.png"])
    print(f"LL/event {report.per_event_ll:.4f}  ACC {report.accuracy:.4f}  "
          f"RMSE {report.rmse:.4f}  macro-F1 {report.macro_f1:.4f}  "
          f"hits {report.classes_hit}/{report.classes_in_test}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = build_config(args.preset, args.config, {"seed": args.seed})
    params = load_checkpoint(args.checkpoint)
    data = _load_or_fail(args.data)
    _check_types_match(params, data)
    out = _out_dir(args.out, "ablate")
    report = ablate_integration(params, data, args.n_samples, cfg, seed=cfg.seed)
    write_metrics(report, out, stem="ablation")
    plot_ablation(report, out / "ablation.png")
    write_manifest(out, "ablate", {**config_to_dict(cfg), "n_samples": args.n_samples},
                   cfg.seed, [args.data],
                   ["ablation.json", "ablation.csv", "ablation.png"])
    print(f"ODE LL/event {report['ode_per_event_ll']:.4f}  "
          f"MC LL/event {report['mc_per_event_ll']:.4f}  gap {report['gap']:+.4f}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    data = _load_or_fail(args.data, jitter=args.jitter)
    s = data.stats()
    print(f"{'dataset':<14} {args.data}")
    print(f"{'event types':<14} {s['num_types']}")
    print(f"{'sequences':<14} {s['num_sequences']}")
    print(f"{'events':<14} {s['num_events']}")
    print(f"{'length':<14} min {s['min_length']}  mean {s['mean_length']:.1f}  "
          f"max {s['max_length']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdehawkes",
                                description="CDE-driven Hawkes process experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate an exponential-kernel Hawkes dataset")
    g.add_argument("--mu", required=True, help="comma-separated base intensities (defines K)")
    g.add_argument("--alpha", required=True,
                   help="excitation: scalar/K values (self-only) or K*K row-major")
    g.add_argument("--beta", required=True,
                   help="decay rates: scalar, K values or K*K row-major (all > 0)")
    g.add_argument("--horizon", type=float, required=True)
    g.add_argument("--n", type=int, required=True, help="number of sequences")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--train-fraction", type=float, default=0.8)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit the model on a JSON dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", default=None)
    t.add_argument("--config", default=None, help="JSON config file")
    t.add_argument("--preset", default=None, choices=sorted(PRESETS))
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--max-iter", type=int, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--substeps", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--jitter", type=float, default=0.0,
                   help="break duplicate timestamps by this increment instead of rejecting")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True, help="checkpoint path prefix")
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.add_argument("--config", default=None)
    e.add_argument("--preset", default=None, choices=sorted(PRESETS))
    e.add_argument("--seed", type=int, default=None)
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="exact vs Monte Carlo non-event integral")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--n-samples", type=int, default=10000)
    a.add_argument("--out", default=None)
    a.add_argument("--config", default=None)
    a.add_argument("--preset", default=None, choices=sorted(PRESETS))
    a.add_argument("--seed", type=int, default=None)
    a.set_defaults(func=cmd_ablate)

    i = sub.add_parser("inspect", help="print dataset statistics")
    i.add_argument("--data", required=True)
    i.add_argument("--jitter", type=float, default=0.0)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, StationarityError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
