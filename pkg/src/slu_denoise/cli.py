"""Command-line entry points for data generation, training, and experiments."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .data_model import load_corpus
from .harness import (
    KNOWN_VARIANTS,
    SWEEP_PARAMS,
    ExperimentConfig,
    apply_variant,
    build_corpora,
    emit_report,
    load_experiment_config,
    run_experiment,
    run_sweep,
    write_dataset,
    _run_cell,
)
from .trainer import evaluate_checkpoint, load_checkpoint


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig.default()
    return load_experiment_config(path)


def _cmd_gen_data(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.seeds[0]
    write_dataset(config, seed, args.out)
    print(f"wrote benchmark corpora for seed {seed} to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.train.seed
    corpora = build_corpora(config, seed)
    tc = apply_variant(args.variant, replace(config.train, seed=seed))
    outcome = _run_cell(Path(args.out), args.variant, seed, tc, corpora, config)
    if outcome.error:
        print(f"training failed: {outcome.error}", file=sys.stderr)
        return 1
    print(json.dumps(outcome.metrics.to_dict(), sort_keys=True, indent=1))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    bundle = load_checkpoint(args.models)
    corpus = load_corpus(args.test, bundle.schema)
    result = evaluate_checkpoint(args.models, corpus)
    print(json.dumps(result.to_dict(), sort_keys=True, indent=1))
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    report = run_experiment(config, args.out)
    failures = [key for key, cell in report.cells.items() if cell.error]
    print(f"experiment complete: {len(report.cells) - len(failures)}/{len(report.cells)} cells ok")
    print(f"reports under {args.out}")
    return 1 if failures else 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    values = [float(v) if "." in v else int(v) for v in args.values.split(",")]
    report = run_sweep(config, args.param, values, args.out)
    failures = [key for key, cell in report.cells.items() if cell.error]
    print(f"sweep complete: {len(report.cells) - len(failures)}/{len(report.cells)} cells ok")
    return 1 if failures else 0


def _cmd_report(args: argparse.Namespace) -> int:
    emit_report(args.run, plots=args.plots)
    print(f"rebuilt reports under {args.run}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slu-denoise",
        description="Denoising co-training experiments for joint intent/slot models",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="enable info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="emit the synthetic benchmark corpora as JSONL")
    p.add_argument("--config", help="experiment config JSON (default: built-in benchmark)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one variant and write its cell outputs")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="denoise_full", choices=KNOWN_VARIANTS)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a saved ensemble checkpoint on a corpus")
    p.add_argument("--models", required=True, help="checkpoint directory")
    p.add_argument("--test", required=True, help="JSONL corpus to score")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("experiment", help="run the full variant matrix over all seeds")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("sweep", help="sweep one parameter over denoise_full runs")
    p.add_argument("--config")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="rebuild CSV/markdown reports from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--plots", action="store_true", help="also render PNG epoch curves")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
