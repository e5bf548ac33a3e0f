"""Command line entry point.

    bench gmm --config cfg.json --out results/ [--seed S] [--workers W] [--smoke]
    bench grf --config cfg.json --out results/ [--seed S] [--workers W] [--smoke]

Without --config the full-scale defaults for the chosen experiment run.
Exit status: 0 on success, 1 on a configuration error, 2 when some cells
failed (partial results are still written).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, default_config, smoke_config
from .report import emit_report
from .run import run_gmm, run_grf

__all__ = ["main"]

WORKERS_ENV = "TMPD_BENCH_WORKERS"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Posterior-sampling benchmarks on analytic priors.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, help_text in (
        ("gmm", "sliced-W1 grid on the 25-component mixture"),
        ("grf", "W2 curves on the Matern random field"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument(
            "--workers",
            type=int,
            default=int(os.environ.get(WORKERS_ENV, "1")),
            help=f"worker processes (default ${WORKERS_ENV} or 1)",
        )
        p.add_argument(
            "--smoke", action="store_true", help="shrink to a seconds-scale run"
        )
    return parser


def _load_config(args) -> "ExperimentConfig":
    cfg = default_config(args.experiment)
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        data.setdefault("experiment", args.experiment)
        if data["experiment"] != args.experiment:
            raise ConfigError(
                f"config experiment {data['experiment']!r} does not match "
                f"subcommand {args.experiment!r}"
            )
        cfg = type(cfg).from_dict(data)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.smoke:
        cfg = smoke_config(cfg)
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    runner = run_gmm if args.experiment == "gmm" else run_grf
    report = runner(cfg, workers=max(1, args.workers))
    emit_report(report, args.out)
    if report.n_failed:
        print(
            f"{report.n_failed} of {len(report.records)} records failed; "
            f"see report.csv",
            file=sys.stderr,
        )
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
