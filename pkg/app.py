"""
Dynamical Quantum State Tomography
Batch command line front end
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

import config
from src.errors import ConfigError, DimensionError, InfeasibleError, NumericalError, ValidationError
from src.pipelines import COMMANDS, REPRODUCTIONS, prepare

logger = logging.getLogger("dqst")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def _add_common(parser: argparse.ArgumentParser, config_required: bool):
    parser.add_argument("--config", required=config_required, help="YAML/JSON experiment config or bundled config name")
    parser.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--tol", type=float, help="Absolute rank tolerance override")
    parser.add_argument("--psd-project", action="store_true", help="Project state estimates onto density matrices")
    parser.add_argument("--workers", type=int, default=config.MAX_WORKERS, help="Threads for genericity trials")
    parser.add_argument("--bases", action="store_true", help="analyze: also write the observable and non-observable bases")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dqst",
        description="Observability analysis, measurement selection and reconstruction for dynamical state tomography",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        _add_common(sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0]), config_required=True)

    reproduce = sub.add_parser("reproduce", help="Run a complete worked example")
    reproduce.add_argument("example", choices=sorted(REPRODUCTIONS))
    _add_common(reproduce, config_required=False)
    return parser


def _configure_logging(verbose: bool):
    level = logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def run(args: argparse.Namespace) -> List[str]:
    """Execute one parsed command and return the files it wrote"""
    if args.command == "reproduce":
        fn, default_config = REPRODUCTIONS[args.example]
        config_path = args.config or default_config
        subdir = f"reproduce_{args.example.replace('-', '_')}"
    else:
        fn = COMMANDS[args.command]
        config_path = args.config
        subdir = args.command

    ctx = prepare(
        config_path,
        seed=args.seed,
        out=args.out,
        tol=args.tol,
        psd_project=args.psd_project,
        workers=args.workers,
        emit_bases=args.bases,
        subdir=subdir,
    )
    fn(ctx)
    return ctx.files


def main(argv: Optional[List[str]] = None) -> int:
    """Main application function"""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)

    try:
        files = run(args)
    except (ConfigError, ValidationError, DimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as e:
        print(json.dumps(e.to_dict(), sort_keys=True, default=str), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    for path in files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
