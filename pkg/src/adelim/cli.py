"""Command-line entry point.

One subcommand per experiment; each run writes one CSV (or JSON) file per
series, a JSON report with fits/scalars/checks, and a rendered figure.
Exit code 0 when every check passes, 2 on a check failure, 1 on error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiments import EXPERIMENTS, load_config, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adelim",
        description=(
            "Adiabatic elimination of fast-decaying Lindblad modes: "
            "reduction maps, relaxation fits, and reproduction experiments."
        ),
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", default=None,
                       help="JSON config overriding the built-in defaults")
        p.add_argument("--out", default="reports",
                       help="output directory (a subdirectory per experiment)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="series file format")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent sweep points")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment, threads=args.threads)
        report = run(cfg)
        outdir = os.path.join(args.out, args.experiment)
        from .report import emit  # deferred: pulls in matplotlib

        paths = emit(report, outdir, fmt=args.format,
                     figures=not args.no_figures)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, check in report.checks.items():
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {name}: value={check.value:.6g} {check.detail}")
    for name, value in report.scalars.items():
        print(f"        {name} = {value:.6g}")
    print(f"report: {paths['report']}")
    if not report.passed:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
