"""Command line front end.

    metastable analyze  --config run.yaml
    metastable validate --config run.yaml --output report.json --jobs 4

Exit codes: 0 success, 2 configuration error, 3 numerical/degeneracy
error, 4 validation verdict failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import load_config
from .errors import ConfigError, MetastableError
from .pipeline import MODES, PipelineError, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERDICT = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metastable", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    help_text = {
        "analyze": "stationary points, skeleton graph and determinants",
        "predict": "analyze + Eyring-Kramers predictions per epsilon",
        "simulate": "Monte Carlo mean hitting times per epsilon",
        "validate": "predict + simulate + Arrhenius fit and KS test with a verdict",
        "detratio": "discrete vs shooting determinant ratios across grid sizes",
    }
    for mode in MODES:
        p = sub.add_parser(mode, help=help_text[mode])
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--output", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), help="overrides output.format")
        p.add_argument("--seed", type=int, help="overrides simulate.seed (unsigned 64-bit)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes; does not affect results")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, simulate=replace(cfg.simulate, seed=args.seed))
        if args.format or args.output:
            cfg = replace(
                cfg,
                output=replace(cfg.output, format=args.format or cfg.output.format, path=args.output or cfg.output.path),
            )
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"metastable: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run_pipeline(cfg, args.mode, jobs=args.jobs)
    except PipelineError as exc:
        print(f"metastable: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConfigError as exc:
        print(f"metastable: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MetastableError as exc:
        print(f"metastable: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    text = report.to_csv() if cfg.output.format == "csv" else report.to_json()
    if cfg.output.path:
        with open(cfg.output.path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not report.passed:
        print("metastable: validation verdict FAILED", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
