"""
Command line entry point.

Usage:
    nmtprobe train-nmt --config run.config [--encoder en-es]
    nmtprobe extract --config run.config --encoder en-es --dataset spr [--split test]
    nmtprobe train-probe --config run.config --encoder en-es --dataset spr
    nmtprobe evaluate --config run.config --encoder en-es --dataset spr --model P
    nmtprobe matrix --config run.config [--combiner infersent] [--probe mlp]
    nmtprobe baseline --config run.config --dataset spr
    nmtprobe gradcheck [--seeds 10] [--component attention]

Every command but gradcheck reads a run config; --seed, --out, --scheme,
--combiner, --probe and --profile override its values. Exit codes: 0 success,
1 failed gradient check, 2 invalid configuration, 3 compute failure, 4 I/O or
data failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from nmtprobe.config import RunConfig, load_run_config
from nmtprobe.errors import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_VALIDATION,
    NmtProbeError,
    ValidationError,
)
from nmtprobe.evalreport import ExperimentReport, emit_report, render_report
from nmtprobe.gradsuite import COMPONENTS, run_suite
from nmtprobe.pipeline import SIDES, Pipeline

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _pipeline(args: argparse.Namespace) -> Pipeline:
    """Loads, overrides and validates the run config before any compute."""

    if args.config is None:
        raise ValidationError(f"{args.command} needs --config")

    overrides = {
        "seed": args.seed,
        "profile": args.profile,
        "out": args.out,
        "scheme": args.scheme,
        "combiner": args.combiner,
        "probe": args.probe,
    }
    config: RunConfig = load_run_config(
        args.config,
        {k: None if v is None else str(v) for k, v in overrides.items()},
    )
    config.validate()

    pipeline = Pipeline(config)
    manifest = pipeline.write_manifest()
    logger.debug("wrote manifest %s", manifest)

    return pipeline


def _write_reports(pipeline: Pipeline, report: ExperimentReport, name: str) -> None:
    out = pipeline.config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report, out / f"{name}.json", "structured")
    emit_report(report, out / f"{name}.txt", "table-text")


def cmd_train_nmt(args: argparse.Namespace) -> int:
    pipeline = _pipeline(args)
    names = [args.encoder] if args.encoder else list(pipeline.config.encoders)
    if not names:
        raise ValidationError("the config declares no [encoder:<id>] sections")

    for name in names:
        path = pipeline.checkpoint_path(name)
        print(f"{name}\t{path}")

    return EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    pipeline = _pipeline(args)
    pipeline.config.encoder(args.encoder)
    dataset = pipeline.dataset(args.dataset)
    splits = [args.split] if args.split else list(dataset.splits)

    for split in splits:
        for side in SIDES:
            dump, digest = pipeline.sentence_dump(args.encoder, dataset, split, side)
            print(
                f"{dataset.name}:{split}:{side}\t{len(dump.row_ids)} vectors\t"
                f"dim {dump.dim}\tsha256 {digest}"
            )

    return EXIT_OK


def cmd_train_probe(args: argparse.Namespace) -> int:
    pipeline = _pipeline(args)
    pipeline.config.encoder(args.encoder)
    dataset = pipeline.dataset(args.dataset)

    model, path = pipeline.probe(args.encoder, dataset)
    print(f"{path}\tinput dim {model.input_dim}\t{model.config.kind}")

    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    pipeline = _pipeline(args)
    pipeline.config.encoder(args.encoder)
    pipeline.config.dataset(args.dataset)

    result, breakdowns = pipeline.evaluate(
        args.encoder, Path(args.model), args.dataset, args.split
    )
    report = pipeline.report()
    report.evaluations.append(result)
    report.breakdowns.extend(breakdowns)

    _write_reports(pipeline, report, "evaluate")
    print(render_report(report), end="")

    return EXIT_OK


def cmd_matrix(args: argparse.Namespace) -> int:
    pipeline = _pipeline(args)
    report = pipeline.matrix()

    _write_reports(pipeline, report, "matrix")
    print(render_report(report), end="")

    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    pipeline = _pipeline(args)
    pipeline.config.dataset(args.dataset)

    results, breakdowns = pipeline.baseline(args.dataset)
    report = pipeline.report()
    report.evaluations.extend(results)
    report.breakdowns.extend(breakdowns)

    _write_reports(pipeline, report, "baseline")
    print(render_report(report), end="")

    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if args.seeds < 1:
        raise ValidationError(f"--seeds must be at least 1, got {args.seeds}")

    reports = run_suite(range(args.seeds), args.component or None)
    failed = [name for name, report in reports.items() if not report.passed]

    for name, report in reports.items():
        status = "ok" if report.passed else "FAILED"
        print(f"{name}\t{report.max_error:.3e}\t{status}")

    if failed:
        logger.error("gradient check failed for %s", ", ".join(failed))
        return EXIT_CHECK_FAILED

    return EXIT_OK


def app() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run config file")
    common.add_argument("--seed", type=int, help="Override [run] seed")
    common.add_argument("--out", help="Override [paths] out")
    common.add_argument("--scheme", choices=["concat_last", "maxpool"])
    common.add_argument("--combiner", choices=["concat", "infersent"])
    common.add_argument("--probe", choices=["linear", "mlp"])
    common.add_argument("--profile", choices=["desk", "paper"])
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="nmtprobe",
        description="Probe NMT encoder representations with NLI classifiers",
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    train_nmt = subparsers.add_parser(
        "train-nmt", parents=[common], help="Train (or reuse) encoder checkpoints"
    )
    train_nmt.add_argument("--encoder", help="Encoder id; default: every encoder")
    train_nmt.set_defaults(func=cmd_train_nmt)

    extract = subparsers.add_parser(
        "extract", parents=[common], help="Dump sentence representations"
    )
    extract.add_argument("--encoder", required=True)
    extract.add_argument("--dataset", required=True)
    extract.add_argument("--split", help="Split name; default: every split")
    extract.set_defaults(func=cmd_extract)

    train_probe = subparsers.add_parser(
        "train-probe", parents=[common], help="Train an NLI probe on one dataset"
    )
    train_probe.add_argument("--encoder", required=True)
    train_probe.add_argument("--dataset", required=True)
    train_probe.set_defaults(func=cmd_train_probe)

    evaluate = subparsers.add_parser(
        "evaluate", parents=[common], help="Apply a saved probe to a dataset split"
    )
    evaluate.add_argument("--encoder", required=True)
    evaluate.add_argument("--dataset", required=True)
    evaluate.add_argument("--model", required=True, help="Probe file")
    evaluate.add_argument("--split", default="test")
    evaluate.set_defaults(func=cmd_evaluate)

    matrix = subparsers.add_parser(
        "matrix", parents=[common], help="Train on every dataset, test on every one"
    )
    matrix.set_defaults(func=cmd_matrix)

    baseline = subparsers.add_parser(
        "baseline", parents=[common], help="Majority baselines of a dataset"
    )
    baseline.add_argument("--dataset", required=True)
    baseline.set_defaults(func=cmd_baseline)

    gradcheck = subparsers.add_parser(
        "gradcheck", parents=[common], help="Finite-difference gradient checks"
    )
    gradcheck.add_argument("--seeds", type=int, default=10)
    gradcheck.add_argument(
        "--component", action="append", choices=list(COMPONENTS), default=[]
    )
    gradcheck.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = app()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format=LOG_FORMAT,
    )
    logging.captureWarnings(True)

    if args.command is None:
        parser.print_help()
        return EXIT_VALIDATION

    try:
        code: int = args.func(args)
    except NmtProbeError as error:
        logger.error("%s", error)
        return error.exit_code

    return code


if __name__ == "__main__":
    sys.exit(main())
