"""Command line entry point.

Exit codes: 0 success, 2 config/format error, 3 missing dependency,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (
    ConfigError,
    ContractViolation,
    DependencyError,
    FormatError,
    IoError,
    LabelError,
    LogloomError,
    MissingVector,
    NumericalError,
)
from .pipeline import STAGES, RunConfig, run_all

EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logloom",
        description="Label-free log anomaly detection pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("parse", "encode", "graph", "train", "detect", "report", "run"):
        cmd = sub.add_parser(name, help=f"run the {name} stage" if name != "run" else "run all stages")
        cmd.add_argument("--config", required=True, help="run config file (key = value lines)")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "run":
            report = run_all(cfg)
            summary = {
                "dataset": report["dataset"],
                "clusters": report["clusters"]["sizes"],
                "metrics": report["metrics"],
            }
            print(json.dumps(summary, sort_keys=True))
        else:
            meta = STAGES[args.command](cfg)
            if args.command == "report":
                meta = {"report": "written"}
            print(json.dumps(meta, sort_keys=True, default=str))
    except (ConfigError, IoError, FormatError, ContractViolation) as exc:
        print(f"logloom: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DependencyError, MissingVector, LabelError) as exc:
        print(f"logloom: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except NumericalError as exc:
        print(f"logloom: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LogloomError as exc:
        print(f"logloom: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
