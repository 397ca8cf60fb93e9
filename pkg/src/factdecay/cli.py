"""Command-line interface: ingest, stats, train, filter, synth, sweep.

Every command is a thin shell over the library: it assembles a RunConfig
(config file first, flags override) and calls the same functions the
Python API exposes.  Exit codes: 0 success, 2 usage error, 3 missing or
unreadable input, 4 invalid configuration, 5 stage failure.  Failures
print one machine-parseable line to stderr: ``error code=<n> message=<text>``.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, apply_overrides, load_config
from .dataset import Dataset, export, ingest, ingest_many, interval_histogram
from .encoder import LABEL_ACTIVE, derive_labels
from .halflife import CLASS_NAMES, write_validity_report
from .optim import load_params, save_params
from .synth import (
    SynthSpec,
    generate,
    read_ground_truth,
    sweep,
    write_ground_truth,
    write_sweep_csv,
)
from .training import pipeline_run, predict_key_classes, train, write_training_log

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_BAD_CONFIG = 4
EXIT_STAGE_FAILURE = 5

SPLIT_NAMES = ("train", "valid", "test")

EPILOG = """\
exit codes:
  0  success
  2  usage error (bad flags)
  3  missing or unreadable input file
  4  invalid configuration (bad key, bad value, out-of-range)
  5  stage failure while running the pipeline

on failure a single machine-parseable line is printed to stderr:
  error code=<exit code> message=<text>
"""


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code: int, message: str) -> "CliError":
    return CliError(code, message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("configuration (flags override the config file)")
    group.add_argument("--config", type=Path, help="key = value configuration file")
    group.add_argument("--theta", type=float, help="filter threshold in [0, 1]")
    group.add_argument("--alpha", type=float, help="margin/cross-entropy mix in [0, 1]")
    group.add_argument("--epochs", type=int)
    group.add_argument("--learning-rate", type=float, dest="learning_rate")
    group.add_argument("--optimizer", choices=("adam", "sgd"))
    group.add_argument("--seed", type=int)
    group.add_argument("--batch-size", type=int, dest="batch_size")
    group.add_argument("--patience", type=int)
    group.add_argument("--schedule", choices=("joint", "two-phase"))
    group.add_argument("--labels", choices=("classifier", "policy", "oracle"))
    group.add_argument("--label-policy", choices=("median-split", "fixed", "quantile"),
                       dest="label_policy")
    group.add_argument("--label-threshold", type=float, dest="label_threshold")
    group.add_argument("--label-quantile", type=float, dest="label_quantile")
    group.add_argument("--scope", choices=("train", "all"),
                       help="which splits get filtered (default train)")
    group.add_argument("--zero-superseded", action="store_const", const=True,
                       dest="zero_superseded",
                       help="score superseded records 0 before thresholding")
    group.add_argument("--invert-margin", action="store_const", const=True,
                       dest="invert_margin", help="flip the margin-loss orientation")
    group.add_argument("--t-current", type=int, dest="t_current",
                       help="override the current day index (default: newest record)")
    group.add_argument("--margin", type=float)
    group.add_argument("--heads", type=int)
    group.add_argument("--entity-dim", type=int, dest="entity_dim")
    group.add_argument("--relation-dim", type=int, dest="relation_dim")
    group.add_argument("--encoder-dim", type=int, dest="encoder_dim")
    group.add_argument("--encoder-layers", type=int, dest="encoder_layers")


def _build_config(args: argparse.Namespace) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except FileNotFoundError as err:
        raise _fail(EXIT_MISSING_INPUT, f"config file not found: {err.filename}")
    except ConfigError as err:
        raise _fail(EXIT_BAD_CONFIG, str(err))
    overrides = {
        key: getattr(args, key)
        for key in (
            "theta", "alpha", "epochs", "learning_rate", "optimizer", "seed",
            "batch_size", "patience", "schedule", "labels", "label_policy",
            "label_threshold", "label_quantile", "scope", "zero_superseded",
            "invert_margin", "t_current", "margin", "heads", "entity_dim",
            "relation_dim", "encoder_dim", "encoder_layers",
        )
        if hasattr(args, key)
    }
    try:
        cfg = apply_overrides(cfg, **overrides)
        cfg.validate()
    except ConfigError as err:
        raise _fail(EXIT_BAD_CONFIG, str(err))
    return cfg


def _ingest_one(path: Path) -> Dataset:
    try:
        return ingest(path)
    except FileNotFoundError:
        raise _fail(EXIT_MISSING_INPUT, f"input file not found: {path}")
    except ValueError as err:
        raise _fail(EXIT_STAGE_FAILURE, str(err))


def _apply_t_current(dataset: Dataset, cfg: RunConfig) -> Dataset:
    if cfg.t_current is None:
        return dataset
    try:
        return dataset.with_t_current(cfg.t_current)
    except ValueError as err:
        raise _fail(EXIT_BAD_CONFIG, str(err))


def cmd_ingest(args) -> int:
    dataset = _ingest_one(args.input)
    summary = {
        "quadruples": dataset.n_quadruples,
        "entities": dataset.vocab.n_entities,
        "relations": dataset.vocab.n_relations,
        "fact_keys": len(dataset.timelines),
        "epoch": dataset.vocab.epoch,
        "t_current": dataset.t_current,
    }
    for key, value in summary.items():
        print(f"{key}: {value}")
    if args.stats_out:
        with open(args.stats_out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _build_config(args)
    dataset = _apply_t_current(_ingest_one(args.input), cfg)
    hist = interval_histogram(dataset.timelines)
    n_updated = sum(1 for tl in dataset.timelines.values() if tl.intervals)
    print(f"quadruples: {dataset.n_quadruples}")
    print(f"entities: {dataset.vocab.n_entities}")
    print(f"relations: {dataset.vocab.n_relations}")
    print(f"fact_keys: {len(dataset.timelines)}")
    print(f"fact_keys_with_updates: {n_updated}")
    print(f"t_current: {dataset.t_current}")
    intervals = [iv for iv, count in hist.items() for _ in range(count)]
    if intervals:
        print(f"update_intervals: n={len(intervals)} min={min(intervals)} "
              f"median={statistics.median(intervals)} mean={statistics.mean(intervals):.3f} "
              f"max={max(intervals)}")
    else:
        print("update_intervals: none")
    print(f"interval_histogram: {json.dumps({str(k): v for k, v in hist.items()})}")
    try:
        labels = derive_labels(
            dataset.timelines, policy=cfg.label_policy,
            threshold=cfg.label_threshold, quantile=cfg.label_quantile,
        )
    except ValueError as err:
        print(f"class_balance: unavailable ({err})")
        return EXIT_OK
    n_active = sum(1 for v in labels.values() if v == LABEL_ACTIVE)
    print(f"class_balance: active={n_active} inactive={len(labels) - n_active} "
          f"(policy={cfg.label_policy})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _build_config(args)
    dataset = _apply_t_current(_ingest_one(args.input), cfg)
    try:
        labels = derive_labels(
            dataset.timelines, policy=cfg.label_policy,
            threshold=cfg.label_threshold, quantile=cfg.label_quantile,
        )
        result = train(
            dataset, labels, cfg.attention_config(), cfg.encoder_config(),
            cfg.train_config(),
        )
    except (ValueError, RuntimeError) as err:
        raise _fail(EXIT_STAGE_FAILURE, str(err))
    save_params(result.params, args.out)
    print(f"trained {result.stopped_epoch} epochs; "
          f"final accuracy {result.final_accuracy:.4f}; checkpoint: {args.out}")
    if args.log:
        write_training_log(args.log, result.log)
        print(f"training log: {args.log}")
    if args.labels_out:
        _, mean_probs = predict_key_classes(
            dataset, result.params, cfg.attention_config(), cfg.encoder_config()
        )
        _write_label_report(args.labels_out, dataset, labels, mean_probs)
        print(f"label report: {args.labels_out}")
    return EXIT_OK


def _write_label_report(path, dataset: Dataset, labels, mean_probs) -> None:
    ents = dataset.vocab.entities
    rels = dataset.vocab.relations
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("head\trelation\ty\ty_hat\tmean_interval\n")
        for key, tl in dataset.timelines.items():
            mean = "" if tl.mean_interval is None else repr(float(tl.mean_interval))
            fh.write(
                f"{ents[key.head]}\t{rels[key.relation]}\t{labels[key]}\t"
                f"{mean_probs[key]!r}\t{mean}\n"
            )


def _resolve_splits(input_path: Path) -> dict[str, Path]:
    if input_path.is_dir():
        splits = {
            name: input_path / f"{name}.txt"
            for name in SPLIT_NAMES
            if (input_path / f"{name}.txt").exists()
        }
        if "train" not in splits:
            raise _fail(EXIT_MISSING_INPUT, f"no train.txt under {input_path}")
        return splits
    if not input_path.exists():
        raise _fail(EXIT_MISSING_INPUT, f"input file not found: {input_path}")
    return {"train": input_path}


def _write_split(dataset: Dataset, mask: np.ndarray, rows: slice, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line, keep in zip(
            dataset.raw_lines[rows], mask[rows].tolist()
        ):
            if keep:
                fh.write(line + "\n")


def cmd_filter(args) -> int:
    cfg = _build_config(args)
    splits = _resolve_splits(args.input)
    names = [name for name in SPLIT_NAMES if name in splits]
    try:
        dataset, slices = ingest_many([splits[name] for name in names])
    except FileNotFoundError as err:
        raise _fail(EXIT_MISSING_INPUT, f"input file not found: {err.filename}")
    except ValueError as err:
        raise _fail(EXIT_STAGE_FAILURE, str(err))
    dataset = _apply_t_current(dataset, cfg)

    params = None
    if args.checkpoint:
        try:
            params = load_params(args.checkpoint)
        except FileNotFoundError:
            raise _fail(EXIT_MISSING_INPUT, f"checkpoint not found: {args.checkpoint}")
        except ValueError as err:
            raise _fail(EXIT_STAGE_FAILURE, str(err))

    try:
        result = pipeline_run(
            dataset, cfg.attention_config(), cfg.encoder_config(),
            cfg.train_config(), cfg.filter_settings(), params=params,
        )
    except (ValueError, RuntimeError) as err:
        raise _fail(EXIT_STAGE_FAILURE, str(err))

    applied = result.keep.copy()
    if cfg.scope == "train":
        in_scope = np.zeros(dataset.n_quadruples, dtype=bool)
        in_scope[slices[names.index("train")]] = True
        applied |= ~in_scope

    if args.input.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, rows in zip(names, slices):
            _write_split(dataset, applied, rows, out_dir / f"{name}.txt")
        report_path = args.report or out_dir / "filter_report.json"
    else:
        out_path = Path(args.out)
        if out_path.parent and not out_path.parent.exists():
            out_path.parent.mkdir(parents=True, exist_ok=True)
        _write_split(dataset, applied, slice(0, dataset.n_quadruples), out_path)
        report_path = args.report or Path(f"{args.out}.report.json")

    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(result.report.to_json())
    if args.validity_out:
        write_validity_report(args.validity_out, dataset, result.scores, cfg.theta)
    dropped = int(dataset.n_quadruples - applied.sum())
    print(f"kept {int(applied.sum())} of {dataset.n_quadruples} quadruples "
          f"({dropped} outdated, scope={cfg.scope})")
    print(f"half-lives: active={float(result.half_lives.active):.4f}d "
          f"inactive={float(result.half_lives.inactive):.4f}d")
    print(f"report: {report_path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_entities=args.entities,
        n_relations=args.relations,
        n_fact_keys=args.keys,
        fraction_active=args.frac_active,
        mean_interval_active=args.mean_active,
        mean_interval_inactive=args.mean_inactive,
        horizon=args.horizon,
        seed=args.seed if args.seed is not None else 0,
    )
    try:
        spec.validate()
    except ValueError as err:
        raise _fail(EXIT_BAD_CONFIG, str(err))
    dataset, truth = generate(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "data.tsv"
    truth_path = out_dir / "truth.tsv"
    export(dataset, np.ones(dataset.n_quadruples, dtype=bool), data_path)
    write_ground_truth(truth_path, truth, dataset)
    print(f"generated {dataset.n_quadruples} quadruples over {len(truth.key_order)} "
          f"fact keys; data: {data_path}; truth: {truth_path}")
    return EXIT_OK


def _parse_grid(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise _fail(EXIT_USAGE, f"grid must be start:stop:step or a comma list, got {spec!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise _fail(EXIT_USAGE, "grid step must be positive")
        count = int(round((stop - start) / step))
        return [round(start + i * step, 12) for i in range(count + 1)]
    try:
        return [float(p) for p in spec.split(",") if p.strip()]
    except ValueError:
        raise _fail(EXIT_USAGE, f"bad grid value in {spec!r}")


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    dataset = _apply_t_current(_ingest_one(args.input), cfg)
    try:
        truth = read_ground_truth(args.truth, dataset)
    except FileNotFoundError:
        raise _fail(EXIT_MISSING_INPUT, f"ground truth not found: {args.truth}")
    except (KeyError, ValueError) as err:
        raise _fail(EXIT_STAGE_FAILURE, f"bad ground truth: {err}")
    grid = _parse_grid(args.grid)
    parameter = args.param.replace("-", "_")
    try:
        rows, best = sweep(
            parameter, grid, dataset, truth,
            theta=cfg.theta, missing_interval=cfg.missing_interval,
        )
    except ValueError as err:
        raise _fail(EXIT_STAGE_FAILURE, str(err))
    write_sweep_csv(args.out, parameter, rows)
    print(f"swept {len(rows)} values of {parameter}; csv: {args.out}")
    if best is not None:
        print(f"best f1={best.f1:.4f} at {parameter}={best.value} "
              f"(precision={best.precision:.4f} recall={best.recall:.4f})")
    else:
        print("best f1: undefined (no grid value produced a defined F1)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factdecay",
        description="Half-life decay scoring and outdated-fact filtering for "
                    "temporal knowledge graphs.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a quadruple file and summarize it")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--stats-out", type=Path, dest="stats_out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="update-interval histogram and class balance")
    p.add_argument("--input", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train the activity model and save a checkpoint")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--log", type=Path, help="training log CSV")
    p.add_argument("--labels-out", type=Path, dest="labels_out",
                   help="per-key label report TSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("filter", help="run the full pipeline and write filtered data")
    p.add_argument("--input", type=Path, required=True,
                   help="quadruple file, or a directory with train/valid/test.txt")
    p.add_argument("--out", type=Path, required=True,
                   help="output file (or directory for split input)")
    p.add_argument("--report", type=Path, help="filter report JSON path")
    p.add_argument("--validity-out", type=Path, dest="validity_out",
                   help="per-record validity report TSV")
    p.add_argument("--checkpoint", type=Path, help="reuse a trained checkpoint")
    _add_config_flags(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--keys", type=int, default=1000)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--relations", type=int, default=20)
    p.add_argument("--frac-active", type=float, default=0.3, dest="frac_active")
    p.add_argument("--mean-active", type=int, default=20, dest="mean_active")
    p.add_argument("--mean-inactive", type=int, default=160, dest="mean_inactive")
    p.add_argument("--horizon", type=int, default=800)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="grid-sweep theta or a half-life override")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True, help="ground-truth sidecar TSV")
    p.add_argument("--param", choices=("theta", "t-hf"), required=True)
    p.add_argument("--grid", required=True,
                   help="start:stop:step (inclusive) or comma-separated values")
    p.add_argument("--out", type=Path, required=True, help="output CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error code={err.code} message={err}", file=sys.stderr)
        return err.code
    except OSError as err:
        print(f"error code={EXIT_STAGE_FAILURE} message={err}", file=sys.stderr)
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
