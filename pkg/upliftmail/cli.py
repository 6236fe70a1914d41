# SPDX-License-Identifier: GPL-3.0-or-later
"""
upliftmail command line.

Subcommands:
    generate   synthetic experiment -> dataset.csv + truth.csv
    split      dataset -> train.csv + test.csv
    train      train.csv -> model JSON
    policy     model -> segment report CSV
    evaluate   model + test.csv -> key-value report + JSON
    sweep      models + test.csv -> cost/benefit sweep CSV

Exit status: 0 on success, 1 on a domain or I/O error, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import sys
import time
from collections.abc import Callable
from pathlib import Path

from .__about__ import __license__, __version__
from .config import RunConfig
from .data import load_csv, split_train_test, write_csv
from .errors import ConfigError, UpliftMailError
from .evaluation import evaluate_policy, sweep, write_sweep_csv
from .learn import learn, summarize
from .policy import Action, segment_report, write_segment_csv
from .synthetic import generate, write_truth_csv
from .tree import Tree, deserialize, read_metadata, serialize

log = logging.getLogger("upliftmail")


# ----------------------------
# Logger
# ----------------------------

def setup_logger(level: str = "info") -> logging.Logger:
    level_map = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warn": logging.WARNING,
        "error": logging.ERROR,
        "crit": logging.CRITICAL,
    }
    logger = logging.getLogger("upliftmail")
    logger.setLevel(level_map.get(level.lower(), logging.INFO))
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("🌳 [%(levelname)s] %(message)s"))
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.propagate = False
    return logger


def show_version() -> None:
    """Print version and license values sourced from ``__about__.py``."""
    print(f"upliftmail {__version__}")
    print(__license__)


# ----------------------------
# File helpers
# ----------------------------

def _open_output(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", encoding="utf-8", newline="")


def _read_bytes(path: Path, label: str) -> bytes:
    if not path.is_file():
        raise ConfigError(f"{label} not found: {path}")
    return path.read_bytes()


def _load_model(path: Path) -> Tree:
    data = _read_bytes(path, "model file")
    tree = deserialize(data)
    log.debug("Loaded %s tree with %d leaves from %s", tree.form.value, tree.leaf_count, path)
    return tree


def _load_dataset(path: Path, run: RunConfig, tree: Tree | None = None):
    _read_bytes(path, "data file")
    with path.open("rb") as fh:
        return load_csv(fh, run.schema_config(), schema=tree.schema if tree is not None else None)


def _build_run(args: argparse.Namespace, overrides: dict[str, object], paths: dict[str, Path | None]) -> RunConfig:
    config_path = args.config
    if config_path is not None and not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}")
    run = RunConfig.build(config_path, overrides, paths)
    log.debug("Effective settings: %s", run.settings)
    return run


def _cost_overrides(args: argparse.Namespace) -> dict[str, object]:
    return {
        "cost": args.cost,
        "revenue_solicited": args.r_s,
        "revenue_unsolicited": args.r_u,
    }


# ----------------------------
# Subcommands
# ----------------------------

def cmd_generate(args: argparse.Namespace) -> int:
    run = _build_run(
        args,
        {
            "seed": args.seed,
            "population_size": args.population_size,
            "mail_probability": args.mail_probability,
            "workers": args.workers,
        },
        {"out": args.out},
    ).with_default_population()
    config = run.generator_config()
    dataset, truth = generate(config, workers=run.workers)
    fingerprint = run.fingerprint()
    data_path = args.out / "dataset.csv"
    truth_path = args.out / "truth.csv"
    with _open_output(data_path) as fh:
        write_csv(dataset, fh, fingerprint)
    with _open_output(truth_path) as fh:
        write_truth_csv(truth, fh, fingerprint)
    mailed = int(dataset.treatment.sum())
    print(f"✅ Generated {len(dataset)} records ({mailed} mailed) in {len(config.segments)} segments")
    print(f"  Dataset      : {data_path}")
    print(f"  Ground truth : {truth_path}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    run = _build_run(
        args,
        {"seed": args.seed, "train_fraction": args.train_fraction},
        {"data": args.data, "out": args.out},
    )
    dataset = _load_dataset(args.data, run)
    train, test = split_train_test(dataset, run.train_fraction, run.seed)
    fingerprint = run.fingerprint()
    for name, part in (("train.csv", train), ("test.csv", test)):
        with _open_output(args.out / name) as fh:
            write_csv(part, fh, fingerprint)
    print(f"✅ Split {len(dataset)} records into {len(train)} train / {len(test)} test")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    started = time.time()
    run = _build_run(
        args,
        {"mode": args.mode, "kappa": args.kappa, "estimator": args.estimator, "max_splits": args.max_splits},
        {"train": args.train, "out": args.out},
    )
    config = run.learn_config()
    train = _load_dataset(args.train, run)
    tree = learn(train, config)
    summary = summarize(tree, config.mode, config.params)
    fingerprint = run.fingerprint()
    metadata = {
        "config_fingerprint": fingerprint,
        "mode": config.mode.value,
        "kappa": config.params.structure_prior_kappa,
        "records": summary.records,
        "score": summary.score,
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_bytes(serialize(tree, metadata))
    duration = time.time() - started

    print("📊 Training summary:")
    print(f"  Mode             : {config.mode.value}")
    print(f"  Records          : {summary.records}")
    print(f"  Log score        : {summary.score:.6f}")
    print(f"  Leaves           : {summary.leaves}")
    print(f"  Splits (on M)    : {summary.splits} ({summary.m_splits})")
    print(f"  Model            : {args.out}")
    print(f"  Duration         : {duration:.2f}s")
    print(
        "UPLIFTMAIL_TRAIN "
        f"mode={config.mode.value} "
        f"records={summary.records} "
        f"score={summary.score:.6f} "
        f"leaves={summary.leaves} "
        f"splits={summary.splits} "
        f"m_splits={summary.m_splits} "
        f"duration={duration:.3f}"
    )
    return 0


def cmd_policy(args: argparse.Namespace) -> int:
    run = _build_run(args, _cost_overrides(args), {"model": args.model, "data": args.data, "out": args.out})
    tree = _load_model(args.model)
    data = _load_dataset(args.data, run, tree) if args.data is not None else None
    rows = segment_report(tree, run.cost_benefit(), data)
    with _open_output(args.out) as fh:
        write_segment_csv(rows, fh, run.fingerprint())
    mailed = sum(1 for row in rows if row.action is Action.MAIL)
    print(f"✅ {len(rows)} segments, {mailed} mailed; report written to {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    run = _build_run(args, _cost_overrides(args), {"model": args.model, "test": args.test, "out": args.out})
    tree = _load_model(args.model)
    test = _load_dataset(args.test, run, tree)
    cb = run.cost_benefit()
    report = evaluate_policy(tree, test, cb)
    fingerprint = run.fingerprint()
    document = {
        "metadata": {
            "config_fingerprint": fingerprint,
            "model_config_fingerprint": read_metadata(args.model.read_bytes()).get("config_fingerprint"),
            "cost_benefit": {"c": cb.c, "r_s": cb.r_s, "r_u": cb.r_u},
        },
        "report": report.to_dict(),
    }
    with _open_output(args.out) as fh:
        fh.write(json.dumps(document, indent=2, sort_keys=True) + "\n")

    print("📊 Evaluation:")
    print(f"  Test records       : {len(test)}")
    print(f"  Matched (mailed)   : {report.matched_mail}")
    print(f"  Matched (unmailed) : {report.matched_nomail}")
    print(f"  Skipped            : {report.skipped}")
    print(f"  Total revenue      : {report.total_revenue:.6f}")
    print(f"  Per person         : {report.per_person_revenue:.6f}")
    print(f"  Mail-to-all        : {report.baseline_per_person:.6f}")
    print(f"  Improvement        : {report.improvement:+.6f}")
    print(
        "UPLIFTMAIL_EVAL "
        f"matched_mail={report.matched_mail} "
        f"matched_nomail={report.matched_nomail} "
        f"skipped={report.skipped} "
        f"per_person={report.per_person_revenue:.6f} "
        f"baseline={report.baseline_per_person:.6f} "
        f"improvement={report.improvement:.6f}"
    )
    return 0


def _model_spec(raw: str) -> tuple[str, Path]:
    """Parse ``NAME=PATH`` (or a bare PATH named after its stem)."""
    name, sep, path = raw.partition("=")
    if not sep:
        return Path(raw).stem, Path(raw)
    if not name or not path:
        raise argparse.ArgumentTypeError("expected NAME=PATH")
    return name, Path(path)


def cmd_sweep(args: argparse.Namespace) -> int:
    run = _build_run(
        args,
        {"cost": args.cost, "sweep_r": args.r},
        {"test": args.test, "out": args.out},
    )
    names = [name for name, _ in args.model]
    if len(set(names)) != len(names):
        raise ConfigError(f"model names must be unique, got {names}")
    trees = [(name, _load_model(path)) for name, path in args.model]
    test = _load_dataset(args.test, run, trees[0][1])
    rows = sweep(trees, test, float(run.settings["cost"]), run.sweep_values)
    with _open_output(args.out) as fh:
        write_sweep_csv(rows, fh, run.fingerprint())
    print(f"✅ Swept {len(rows)} benefit levels for {len(trees)} model(s); written to {args.out}")
    return 0


# ----------------------------
# CLI
# ----------------------------

def _positive_integer(raw_value: str) -> int:
    """Parse a strictly positive command-line integer.

    Raises:
        argparse.ArgumentTypeError: If the value is not a positive integer.
    """
    try:
        value = int(raw_value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("value must be an integer") from exc
    if value <= 0:
        raise argparse.ArgumentTypeError("value must be greater than zero")
    return value


def _non_negative_integer(raw_value: str) -> int:
    try:
        value = int(raw_value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("value must be an integer") from exc
    if value < 0:
        raise argparse.ArgumentTypeError("value must not be negative")
    return value


def _non_negative_float(raw_value: str) -> float:
    """Parse a finite, non-negative command-line number.

    Raises:
        argparse.ArgumentTypeError: If the value is negative or not finite.
    """
    try:
        value = float(raw_value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("value must be a number") from exc
    if not value >= 0 or not value < float("inf"):
        raise argparse.ArgumentTypeError("value must be non-negative and finite")
    return value


def _fraction(raw_value: str) -> float:
    value = _non_negative_float(raw_value)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("value must lie strictly between 0 and 1")
    return value


def _probability(raw_value: str) -> float:
    value = _non_negative_float(raw_value)
    if value > 1.0:
        raise argparse.ArgumentTypeError("value must lie in [0, 1]")
    return value


def _kappa(raw_value: str) -> float:
    value = _probability(raw_value)
    if value == 0.0:
        raise argparse.ArgumentTypeError("value must be greater than zero")
    return value


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, metavar="PATH", help="key = value run configuration file")
    common.add_argument("--log-level", choices=["debug", "info", "warn", "error", "crit"], default="info",
                        help="Set log verbosity")
    common.add_argument("--debug", action="store_true", help="Enable verbose debug logging")
    common.add_argument("-q", "--quiet", action="store_true",
                        help="Suppress all output on success")
    return common


def _cost_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--c", "--cost", dest="cost", type=_non_negative_float, metavar="C",
                        help="Mailing cost per person (default from config, else 0.42)")
    parser.add_argument("--r-s", dest="r_s", type=_non_negative_float, metavar="R",
                        help="Revenue of a solicited subscription")
    parser.add_argument("--r-u", dest="r_u", type=_non_negative_float, metavar="R",
                        help="Revenue of an unsolicited subscription")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="upliftmail",
        description="Learn uplift trees from mailing experiments and evaluate the resulting policies.",
    )
    parser.add_argument("-v", "--version", action="store_true", help="Show version and license")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    common = _common_options()

    p = commands.add_parser("generate", parents=[common], help="Draw a synthetic experiment")
    p.add_argument("--out", type=Path, required=True, metavar="DIR",
                   help="Directory for dataset.csv and truth.csv")
    p.add_argument("--seed", type=_non_negative_integer, help="Random seed")
    p.add_argument("--population-size", type=_positive_integer, metavar="N", help="Number of people")
    p.add_argument("--mail-probability", type=_probability, metavar="Q", help="Share of people mailed")
    p.add_argument("--workers", type=_positive_integer, metavar="N", help="Generator threads")
    p.set_defaults(handler=cmd_generate)

    p = commands.add_parser("split", parents=[common], help="Partition a dataset into train and test files")
    p.add_argument("--data", type=Path, required=True, metavar="CSV")
    p.add_argument("--out", type=Path, required=True, metavar="DIR",
                   help="Directory for train.csv and test.csv")
    p.add_argument("--train-fraction", type=_fraction, metavar="F")
    p.add_argument("--seed", type=_non_negative_integer)
    p.set_defaults(handler=cmd_split)

    p = commands.add_parser("train", parents=[common], help="Learn an uplift tree")
    p.add_argument("--train", type=Path, required=True, metavar="CSV")
    p.add_argument("--out", type=Path, required=True, metavar="JSON")
    p.add_argument("--mode", choices=["normal", "force", "split-first"])
    p.add_argument("--kappa", type=_kappa, help="Structure prior per parameter (default 0.001)")
    p.add_argument("--estimator", choices=["posterior", "mle"], help="Leaf predictive rule")
    p.add_argument("--max-splits", type=_non_negative_integer, metavar="N",
                   help="Stop growth after N accepted splits")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("policy", parents=[common], help="Write the segment report of a model")
    p.add_argument("--model", type=Path, required=True, metavar="JSON")
    p.add_argument("--out", type=Path, required=True, metavar="CSV")
    p.add_argument("--data", type=Path, metavar="CSV", help="Count segment support on this dataset")
    _cost_options(p)
    p.set_defaults(handler=cmd_policy)

    p = commands.add_parser("evaluate", parents=[common], help="Matched-record revenue of a model's policy")
    p.add_argument("--model", type=Path, required=True, metavar="JSON")
    p.add_argument("--test", type=Path, required=True, metavar="CSV")
    p.add_argument("--out", type=Path, required=True, metavar="JSON")
    _cost_options(p)
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser("sweep", parents=[common], help="Evaluate models over a range of benefits r_s = r_u = r")
    p.add_argument("--model", type=_model_spec, action="append", required=True, metavar="NAME=PATH",
                   help="Model to evaluate; repeat for several")
    p.add_argument("--test", type=Path, required=True, metavar="CSV")
    p.add_argument("--out", type=Path, required=True, metavar="CSV")
    p.add_argument("--c", "--cost", dest="cost", type=_non_negative_float, metavar="C", help="Mailing cost")
    p.add_argument("--r", dest="r", metavar="LO:HI[:STEP]", help="Benefit range (default 1:15)")
    p.set_defaults(handler=cmd_sweep)
    return parser


def _run(args: argparse.Namespace) -> int:
    if args.quiet:
        args.log_level = "crit"
        args.debug = False
        stdout_buffer = io.StringIO()
        try:
            with contextlib.redirect_stdout(stdout_buffer):
                exit_code = _run_inner(args)
        except Exception:
            sys.stderr.write(stdout_buffer.getvalue())
            raise
        if exit_code != 0:
            sys.stderr.write(stdout_buffer.getvalue())
        return exit_code
    return _run_inner(args)


def _run_inner(args: argparse.Namespace) -> int:
    global log
    if args.debug:
        args.log_level = "debug"
    log = setup_logger(args.log_level)
    if log.isEnabledFor(logging.DEBUG):
        log.debug("Debug logging enabled")
        log.debug("CLI arguments: %s", {k: str(v) if isinstance(v, Path) else v
                                         for k, v in vars(args).items() if k != "handler"})

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (UpliftMailError, ValueError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"❌ {exc.strerror or exc}: {exc.filename}" if exc.filename else f"❌ {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        show_version()
        return 0
    if args.command is None:
        parser.error("a subcommand is required")
    return _run(args)


if __name__ == "__main__":
    raise SystemExit(main())
