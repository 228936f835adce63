"""Command-line interface for incboost experiments."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from incboost.boosting import RoundFailedError, ensemble_predict
from incboost.data import DatasetError, IdxFormatError, load_idx
from incboost.experiment import (
    ConfigError,
    SummaryError,
    load_config,
    render_summary,
    resolve_output_dir,
    run_experiment,
    summarize,
    summary_csv,
    validate_config,
)
from incboost.network import NonFiniteError
from incboost.serialization import ModelFormatError, load_model

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incboost",
        description="AdaBoost.M2 and Deep Incremental Boosting over small numpy networks.",
        formatter_class=argparse.RawTextHelpFormatter,
        epilog=(
            "Examples:\n"
            "  incboost validate --config configs/moons-dib.json\n"
            "  incboost run --config configs/mnist-desk-dib.json --out runs/mnist --workers 4\n"
            "  incboost summarize --in runs/mnist --csv runs/mnist/summary.csv\n"
            "  incboost predict --model runs/mnist/dib-run000.model \\\n"
            "      --images t10k-images-idx3-ubyte --labels t10k-labels-idx1-ubyte\n"
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log every epoch")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run every repetition of an experiment")
    run_parser.add_argument("--config", required=True, help="Experiment config (JSON)")
    run_parser.add_argument("--out", default=None, help="Output directory (default: $INCBOOST_OUTPUT_DIR or ./runs)")
    run_parser.add_argument("--workers", type=int, default=None, help="Repetitions run in parallel")
    run_parser.add_argument(
        "--no-deterministic",
        dest="deterministic",
        action="store_false",
        help="Let parallel gradient workers reduce in completion order",
    )

    summarize_parser = subparsers.add_parser("summarize", help="Compare methods over finished runs")
    summarize_parser.add_argument("--in", dest="records_dir", required=True, help="Directory of run records")
    summarize_parser.add_argument("--csv", default=None, help="Also write the table as CSV")

    validate_parser = subparsers.add_parser(
        "validate", help="Check a config and dry-run its growth policy"
    )
    validate_parser.add_argument("--config", required=True, help="Experiment config (JSON)")

    predict_parser = subparsers.add_parser("predict", help="Classify an IDX file with a saved model")
    predict_parser.add_argument("--model", required=True, help="Saved ensemble")
    predict_parser.add_argument("--images", required=True, help="IDX image file")
    predict_parser.add_argument("--labels", required=True, help="IDX label file")
    predict_parser.add_argument("--out", default=None, help="Write per-example predictions as CSV")

    return parser


def _configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[incboost] %(message)s"))
    root = logging.getLogger("incboost")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def _fail(message: str, code: int) -> int:
    sys.stderr.write(f"[incboost] {message}\n")
    return code


def _cmd_validate(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
        specs = validate_config(cfg)
    except ConfigError as exc:
        return _fail(f"invalid config: {exc}", EXIT_INVALID)
    print(f"{cfg.method}: {cfg.repetitions} repetition(s), {len(specs)} round(s)")
    for index, spec in enumerate(specs):
        print(f"round {index}\t{len(spec.layers)} layers\toutput {spec.num_classes} classes")
    return EXIT_OK


def _cmd_run(config_path: str, out_dir: Optional[str], workers: Optional[int], deterministic: bool) -> int:
    try:
        cfg = load_config(config_path)
        if not deterministic:
            cfg = replace(cfg, train=replace(cfg.train, deterministic=False))
        if workers is not None and workers < 1:
            raise ConfigError("--workers must be >= 1")
        validate_config(cfg)
    except ConfigError as exc:
        return _fail(f"invalid config: {exc}", EXIT_INVALID)

    try:
        records = run_experiment(cfg, out_dir=out_dir, workers=workers)
    except (ConfigError, DatasetError, IdxFormatError) as exc:
        return _fail(f"invalid input: {exc}", EXIT_INVALID)
    except (RoundFailedError, NonFiniteError) as exc:
        return _fail(f"run failed: {exc}", EXIT_FAILED)
    except Exception as exc:  # pragma: no cover - reported, not raised
        return _fail(f"run failed: {exc}", EXIT_FAILED)

    target = resolve_output_dir(cfg, out_dir)
    for record in records:
        print(f"{record.run_id}\tseed {record.seed}\ttest error {record.test_error:.4f}")
    print(f"records written to {target}")
    return EXIT_OK


def _cmd_summarize(records_dir: str, csv_path: Optional[str]) -> int:
    try:
        summary = summarize(records_dir)
    except SummaryError as exc:
        return _fail(str(exc), EXIT_INVALID)
    sys.stdout.write(render_summary(summary))
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(summary_csv(summary))
    return EXIT_OK


def _cmd_predict(model_path: str, images: str, labels: str, out_path: Optional[str]) -> int:
    try:
        ensemble, _ = load_model(model_path)
        data = load_idx(images, labels, num_classes=ensemble.num_classes)
    except OSError as exc:
        return _fail(f"cannot read input: {exc}", EXIT_INVALID)
    except (ModelFormatError, IdxFormatError, DatasetError) as exc:
        return _fail(f"invalid input: {exc}", EXIT_INVALID)
    if data.input_shape != ensemble.input_shape:
        return _fail(
            f"images have shape {data.input_shape}, the model expects {ensemble.input_shape}",
            EXIT_INVALID,
        )

    try:
        predictions = ensemble_predict(ensemble, data.examples)
    except NonFiniteError as exc:
        return _fail(f"prediction failed: {exc}", EXIT_FAILED)
    error = float(np.mean(predictions != data.labels)) if len(data) else 0.0
    print(f"{len(data)} examples, {len(ensemble)} members, misclassification rate {error:.4f}")
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(("id", "label", "prediction"))
            for row in zip(data.ids.tolist(), data.labels.tolist(), predictions.tolist()):
                writer.writerow(row)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    if args.command == "validate":
        return _cmd_validate(args.config)
    if args.command == "run":
        return _cmd_run(args.config, args.out, args.workers, args.deterministic)
    if args.command == "summarize":
        return _cmd_summarize(args.records_dir, args.csv)
    if args.command == "predict":
        return _cmd_predict(args.model, args.images, args.labels, args.out)

    parser.error("Unknown command")
    return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
