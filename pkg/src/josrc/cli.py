"""Command-line front end.

    josrc run --config exp.cfg [--seed N] [--out DIR]
    josrc gen-data --config exp.cfg [--out DIR]
    josrc eval --checkpoint model.ckpt --data test.csv
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, experiment, nn, trainer
from .errors import ConfigError, InvalidInputError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="josrc",
        description="Noise-robust training experiments on synthetic noisy datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the arms of an experiment config")
    run.add_argument("--config", required=True, help="path to a key = value config file")
    run.add_argument("--seed", type=int, default=None, help="override the config seed(s)")
    run.add_argument("--out", default=None, help="override the output directory")

    gen = sub.add_parser("gen-data", help="materialize the config's dataset as CSV")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", default=None, help="override the output directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset CSV")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    return parser


def _cmd_run(args) -> int:
    spec = experiment.parse_config(args.config)
    if args.seed is not None:
        spec = replace(spec, seeds=(args.seed,))
    if args.out is not None:
        spec = replace(spec, out_dir=args.out)
    rc = experiment.run_experiment(spec)
    print(f"summary written to {Path(spec.out_dir) / 'summary.csv'}")
    return rc


def _cmd_gen_data(args) -> int:
    spec = experiment.parse_config(args.config)
    if args.out is not None:
        spec = replace(spec, out_dir=args.out)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = spec.seeds[0]
    train_ds, test_ds = experiment.materialize_data(spec.data, seed)
    train_path = out / f"{spec.run_name}_train.csv"
    test_path = out / f"{spec.run_name}_test.csv"
    data.save_dataset_csv(train_ds, train_path)
    test_noisy = data.NoisyDataset(
        test_ds.features,
        test_ds.true_labels.copy(),
        test_ds.true_labels.copy(),
        np.full(len(test_ds), data.PROVENANCE_CLEAN, dtype=np.int8),
        test_ds.class_count,
    )
    data.save_dataset_csv(test_noisy, test_path)
    print(f"wrote {train_path} ({len(train_ds)} samples) and {test_path} ({len(test_noisy)} samples)")
    return 0


def _cmd_eval(args) -> int:
    model = nn.load_checkpoint(args.checkpoint)
    ds = data.load_dataset_csv(args.data)
    test = data.RawDataset(ds.features, ds.true_labels, max(ds.class_count, model.class_count),
                           origin="csv")
    acc = trainer.evaluate(model, test)
    print(f"accuracy {acc:.6f} on {len(test)} samples")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        return _cmd_eval(args)
    except (ConfigError, InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
