"""Command-line interface.

Subcommands:
  synth      emit a synthetic dataset as CSV
  train      train the stochastic network on a dataset, save parameters,
             imputed features and the train log
  extract    deterministic features from saved parameters + data
  reduce     fit a linear baseline (pca/sir) and emit projected features
  evaluate   fit a downstream head on projected features and report metrics
  benchmark  run the full (method, q) grid from a config file

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .baselines import PCAReducer, SIRReducer
from .errors import ConfigError, DivergenceError
from .heads import LinearHead, LogisticHead, evaluate as evaluate_head
from .model import forward_dnn, load_theta, save_theta
from .numerics import RngStream
from .validation import as_labels


def _read_features_csv(path) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    start = 0
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        start = 1
    return np.asarray([[float(v) for v in row] for row in rows[start:]])


def _write_features_csv(Z: np.ndarray, path) -> None:
    from .sdr import write_features_csv

    write_features_csv(np.atleast_2d(Z), path)


def _load_data(args) -> harness.Dataset:
    return harness.load_csv(
        args.data,
        response_columns=args.response_columns,
        label_column=args.label_column,
        has_header=not args.no_header,
    )


def _add_schema_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--response-columns", nargs="+", default=None,
                   help="response column names/indices (regression)")
    p.add_argument("--label-column", default=None,
                   help="label column name/index (classification)")
    p.add_argument("--no-header", action="store_true",
                   help="the CSV has no header row")


def cmd_synth(args) -> int:
    stream = RngStream(args.seed).child(harness._DATA_STREAM)
    if args.name == "m1":
        ds = harness.gen_m1(args.n, stream, noise_scale=args.noise_scale)
    elif args.name == "circle":
        ds = harness.gen_circle(args.n, stream, p=args.p)
    else:
        raise ConfigError(f"unknown synthetic dataset {args.name!r}")
    harness.write_dataset_csv(ds, args.out)
    print(f"wrote {ds.n} rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    dataset = harness._load_dataset(config)
    dataset, _ = harness.standardize_dataset(dataset)
    # The configured architecture governs the reduced dimension here; the
    # q grid only applies to the benchmark command.
    q = int(config.network["widths"][-2])
    est = harness._stonet_estimator(config, dataset, q)
    Z = est.fit_transform(dataset.X, dataset.y)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_theta(out / "theta.json", est.spec_, est.theta_)
    stats = {"x": dataset.x_stats.to_dict()}
    if dataset.y_stats is not None:
        stats["y"] = dataset.y_stats.to_dict()
    (out / "standardization.json").write_text(
        json.dumps(stats), encoding="utf-8"
    )
    _write_features_csv(Z, out / "features.csv")
    (out / "train_log.jsonl").write_text(
        est.report_.to_jsonl() + "\n", encoding="utf-8"
    )
    summary = est.report_.summary()
    (out / "train_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8"
    )
    print(f"trained: {len(est.report_.records)} iterations; outputs in {out}")
    return 0


def cmd_extract(args) -> int:
    spec, theta = load_theta(args.theta)
    ds = _load_data(args)
    if ds.p != spec.p:
        raise ConfigError(
            f"data has {ds.p} predictors, saved network expects {spec.p}"
        )
    X = ds.X
    stats_path = (
        Path(args.standardization)
        if args.standardization
        else Path(args.theta).parent / "standardization.json"
    )
    if stats_path.exists():
        from .numerics import StandardizationStats

        stats = json.loads(stats_path.read_text(encoding="utf-8"))
        X = StandardizationStats.from_dict(stats["x"]).apply(X)
    elif args.standardization:
        raise ConfigError(f"standardization file not found: {stats_path}")
    trace = forward_dnn(spec, theta, X)
    _write_features_csv(trace.tilde_y[spec.h - 1], args.out)
    print(f"wrote features for {ds.n} rows to {args.out}")
    return 0


def cmd_reduce(args) -> int:
    ds = _load_data(args)
    if args.method == "pca":
        reducer = PCAReducer(q=args.q).fit(ds.X)
    elif args.method == "sir":
        reducer = SIRReducer(q=args.q, n_slices=args.n_slices).fit(ds.X, ds.y)
    else:
        raise ConfigError(f"unknown reducer {args.method!r}")
    _write_features_csv(reducer.transform(ds.X), args.out)
    print(f"wrote {args.method} features to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    Z_train = _read_features_csv(args.features_train)
    Z_test = _read_features_csv(args.features_test)
    train_args = argparse.Namespace(
        data=args.data_train,
        response_columns=args.response_columns,
        label_column=args.label_column,
        no_header=args.no_header,
    )
    test_args = argparse.Namespace(
        data=args.data_test,
        response_columns=args.response_columns,
        label_column=args.label_column,
        no_header=args.no_header,
    )
    train_ds = _load_data(train_args)
    test_ds = _load_data(test_args)
    if args.head == "logistic":
        head = LogisticHead().fit(Z_train, as_labels(train_ds.y))
        metrics = evaluate_head(head, Z_test, as_labels(test_ds.y))
    else:
        head = LinearHead().fit(Z_train, train_ds.y)
        metrics = evaluate_head(head, Z_test, test_ds.y)
    payload = metrics.to_dict()
    if args.format == "json":
        text = json.dumps(payload, indent=2, sort_keys=True)
    else:
        lines = ["metric,value"]
        lines += [f"{k},{v!r}" for k, v in sorted(payload.items())]
        text = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_benchmark(args) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    if args.method:
        config.methods = list(args.method)
    if args.q:
        config.q = list(args.q)
    if args.format:
        config.format = args.format
    bundle = harness.run_experiment(config)
    print(f"wrote {len(bundle.manifest)} files to {config.out_dir}")
    if bundle.errors:
        for cell, err in sorted(bundle.errors.items()):
            print(f"error in {cell}: {err}", file=sys.stderr)
        if not bundle.records:
            raise DivergenceError("every experiment cell failed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stonet",
        description="Stochastic-network sufficient dimension reduction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic dataset CSV")
    p.add_argument("--name", choices=("m1", "circle"), required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--p", type=int, default=10, help="circle: total dimensions")
    p.add_argument("--noise-scale", type=float, default=float(np.sqrt(0.5)))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the stochastic network")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="features from saved parameters + data")
    p.add_argument("--theta", required=True)
    p.add_argument("--data", required=True)
    p.add_argument(
        "--standardization",
        default=None,
        help="stats JSON written by `train` (auto-detected next to --theta)",
    )
    _add_schema_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reduce", help="fit a linear baseline reducer")
    p.add_argument("--method", choices=("pca", "sir"), required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n-slices", type=int, default=10)
    p.add_argument("--data", required=True)
    _add_schema_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("evaluate", help="fit a head on features and score it")
    p.add_argument("--features-train", required=True)
    p.add_argument("--features-test", required=True)
    p.add_argument("--data-train", required=True)
    p.add_argument("--data-test", required=True)
    _add_schema_flags(p)
    p.add_argument("--head", choices=("linear", "logistic"), required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="run the full grid from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--method", nargs="+", choices=harness.METHODS, default=None)
    p.add_argument("--q", type=int, nargs="+", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
