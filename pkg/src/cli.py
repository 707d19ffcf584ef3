# ============================================================================
#  File:    cli.py
#  Purpose: Command line entry point: run, compare and validate experiments
# ============================================================================
# SECTION 1: Imports & Configuration
# ============================================================================
#
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger

from src.artifacts import to_jsonable
from src.config import LOG_CONFIG
from src.config_manager import ExperimentConfigManager
from src.error_handling import EXIT_CONFIG_ERROR, EXIT_NUMERIC_ERROR, EXIT_OK, MreitError, log_error
from src.experiment import ExperimentRunner, compare_runs
#
# ============================================================================
# SECTION 2: Logging
# ============================================================================
# Function 2.1: configure_logging
# Purpose: File sink from LOG_CONFIG plus a stderr sink (INFO, or DEBUG with
#          --verbose).
# ============================================================================
#
def configure_logging(verbose: bool = False, log_file: Optional[Path] = None) -> None:
    file_cfg = LOG_CONFIG['handlers']['file']
    fmt = LOG_CONFIG['formatters']['default']['format']
    logger.remove()
    path = Path(log_file or file_cfg['path'])
    path.parent.mkdir(parents=True, exist_ok=True)
    logger.add(
        sink=path,
        level=file_cfg['level'],
        format=fmt,
        rotation=file_cfg['rotation'],
        retention=file_cfg['retention'],
        enqueue=True,
        backtrace=True,
        diagnose=False
    )
    logger.add(
        sink=sys.stderr,
        level="DEBUG" if verbose else LOG_CONFIG['handlers']['console']['level'],
        format=fmt
    )
#
# ============================================================================
# SECTION 3: Commands
# ============================================================================
# Function 3.1: cmd_run
# ============================================================================
#
def cmd_run(args: argparse.Namespace) -> int:
    manager = ExperimentConfigManager(args.config)
    run_dir = ExperimentRunner(manager, args.output_root).run()
    print(f"run written to {run_dir}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    manager = ExperimentConfigManager(args.config)
    report = ExperimentRunner(manager, args.output_root).dry_run()
    print(json.dumps(to_jsonable(report), indent=2, sort_keys=True))
    if report["missing_inputs"]:
        logger.error("missing input files: {}", report["missing_inputs"])
        return EXIT_CONFIG_ERROR
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    rows = compare_runs(Path(args.dir_a), Path(args.dir_b))
    name_a, name_b = Path(args.dir_a).name, Path(args.dir_b).name
    print(f"{'n':>4}  {name_a:>14}  {name_b:>14}")
    for n, a, b in rows:
        print(f"{n:>4}  {a:>14.4f}  {b:>14.4f}")
    return EXIT_OK
#
# ============================================================================
# SECTION 4: Main Execution & CLI Interface
# ============================================================================
# Function 4.1: build_parser
# ============================================================================
#
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mreit",
        description="Single-current harmonic Bz conductivity imaging experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python -m src.cli run config/toy.yaml
    python -m src.cli validate config/torso.yaml
    python -m src.cli compare runs/toy runs/toy/blurred
        """
    )
    parser.add_argument('--verbose', action='store_true', help='Debug output on stderr')
    parser.add_argument('--output-root', type=str, default=None,
                        help='Directory for run folders (overrides MREIT_OUTPUT_ROOT and the file)')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run an experiment file end to end')
    run.add_argument('config', type=Path)
    run.set_defaults(func=cmd_run)

    validate = sub.add_parser('validate', help='Check a file and its inputs without solving')
    validate.add_argument('config', type=Path)
    validate.set_defaults(func=cmd_validate)

    compare = sub.add_parser('compare', help='Tabulate RE of two run folders at n = 5, 10, ..., 50')
    compare.add_argument('dir_a', type=Path)
    compare.add_argument('dir_b', type=Path)
    compare.set_defaults(func=cmd_compare)
    return parser
#
# ============================================================================
# Function 4.2: main
# ============================================================================
#
def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except MreitError as e:
        log_error(e)
        print(e.formatted(), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception("unexpected failure: {}", e)
        return EXIT_NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
#
#
## End of Script
