#!/usr/bin/env python3

import sys
import argparse
from pathlib import Path
from logger import logger
from utils import get_version_from_toml
from errors import ConfigError, NumericQualityError
from experiments import EXPERIMENTS, ExperimentConfig, emit_plotdata, resolve_out_dir, run

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="embz - finite-dimensional embezzlement of entanglement experiments")
    parser.add_argument("-v", "--version", action="store_true", help="Display the current version")
    subparsers = parser.add_subparsers(dest="experiment")
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name, help=f"Run the {name} experiment")
        sub.add_argument("--config", type=Path, help="JSON experiment config")
        sub.add_argument("--out", type=Path, help="Output directory")
        sub.add_argument("--seed", type=int, help="Override the config seed")
        sub.add_argument("--force", action="store_true", help="Recompute even on a cache hit")
        sub.add_argument("--threads", type=int, help="Worker threads")
        sub.add_argument("--no-plot", action="store_true", help="Skip plot/*.csv output")
    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {"experiment": args.experiment}
    if args.config:
        loaded = ExperimentConfig.load(args.config).to_json()
        if loaded["experiment"] != args.experiment:
            raise ConfigError(f"{args.config} is a {loaded['experiment']!r} config, not {args.experiment!r}")
        data = {k: v for k, v in loaded.items() if v is not None}
    if args.seed is not None:
        data["seed"] = args.seed
    return ExperimentConfig.from_json(data)


def main(argv: list[str] | None = None) -> int:
    version = get_version_from_toml()
    args = parse_args(argv)

    if args.version:
        print(f"Version: {version}")
        return 0
    if not args.experiment:
        logger.error("No experiment given, see --help")
        return EXIT_CONFIG

    logger.info(f"Starting embz v{version}: {args.experiment}")
    try:
        config = build_config(args)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be positive, got {args.threads}")
        out_dir = resolve_out_dir(config, args.out)
        record = run(config, out_dir, force=args.force, threads=args.threads)
        if not args.no_plot:
            emit_plotdata(record, out_dir)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except NumericQualityError as e:
        logger.error(f"Numerical quality check failed: {e}")
        return EXIT_NUMERIC
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    return 0


if __name__ == "__main__":
    if sys.version_info < (3, 10):
        print("Error: Python 3.10 or higher is required")
        print("Current Python version: " + sys.version)
        sys.exit(1)
    sys.exit(main())
