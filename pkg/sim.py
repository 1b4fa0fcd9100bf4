#!/usr/bin/env python3
import argparse
import asyncio
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Dict, List, Optional

import sim_config
from errors import UsageError
from harness import (
    EXPERIMENTS,
    ResultRow,
    arun_experiment,
    build_config,
    emit_summary,
    load_config_file,
    parse_param,
    print_summary,
)
from run_logger import RunLogger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def setup_logging(verbose: bool = False, log_file: str = sim_config.LOG_FILE) -> None:
    """Rotating log file (10MB per file, keep 7 backups) plus console output."""
    log_handler = RotatingFileHandler(
        log_file,
        maxBytes=sim_config.LOG_MAX_BYTES,
        backupCount=sim_config.LOG_BACKUP_COUNT,
        encoding='utf-8'
    )
    log_handler.setLevel(logging.DEBUG)
    console = logging.StreamHandler()
    console.setLevel(logging.DEBUG if verbose else logging.INFO)

    logging.basicConfig(
        level=logging.DEBUG,
        handlers=[log_handler, console],
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        force=True
    )

    # Silence the event loop's own chatter
    logging.getLogger('asyncio').setLevel(logging.CRITICAL)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim",
        description="Simulate SMP protocols with LOCC referees and check their error bounds",
    )
    parser.add_argument('experiment', help=f"experiment id or 'all' ({', '.join(EXPERIMENTS)})")
    parser.add_argument('--param', action='append', default=[], metavar='KEY=VALUE',
                        help='override one experiment parameter (repeatable)')
    parser.add_argument('--config', type=Path, help='flat JSON object of parameter overrides')
    parser.add_argument('--seed', type=int, required=True, help='run seed')
    parser.add_argument('--out', type=Path, required=True,
                        help="result CSV path (a directory when running 'all')")
    parser.add_argument('--log-dir', default=sim_config.RUN_LOG_DIRECTORY, help='per-experiment log directory')
    parser.add_argument('--verbose', action='store_true', help='Verbose logging')
    return parser


def collect_overrides(config: Optional[Path], params: List[str]) -> Dict[str, str]:
    overrides = dict(load_config_file(config)) if config else {}
    for text in params:
        key, value = parse_param(text)
        overrides[key] = value
    return overrides


async def run(args: argparse.Namespace) -> int:
    overrides = collect_overrides(args.config, args.param)
    if args.experiment == "all":
        if overrides:
            raise UsageError("--param and --config apply to a single experiment, not 'all'")
        configs = [build_config(name, args.seed, args.out / f"{name}.csv") for name in EXPERIMENTS]
        stem = args.out / "summary"
    else:
        configs = [build_config(args.experiment, args.seed, args.out, overrides)]
        stem = args.out.with_suffix("")

    run_log = RunLogger(args.log_dir)
    tables: Dict[str, List[ResultRow]] = {}
    try:
        for cfg in configs:
            tables[cfg.experiment] = await arun_experiment(cfg, run_log)
            logger.info(f"{cfg.experiment}: {len(tables[cfg.experiment])} rows written to {cfg.out}")
    finally:
        run_log.close()

    summaries = emit_summary(tables, stem, {cfg.experiment: cfg.success_fraction for cfg in configs})
    print_summary(summaries)
    return EXIT_OK if all(s.passed for s in summaries) else EXIT_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return asyncio.run(run(args))
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        print(f"sim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
