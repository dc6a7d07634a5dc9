"""
Lazy TSO - Command Line
`check` and `bench` sub-commands
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from lazy_tso.bench import bench
from lazy_tso.checker import MODES, CheckOptions, check_file
from lazy_tso.config import Settings, load_settings, parse_schedule
from lazy_tso.errors import LazyTsoError, ProgramValidationError
from lazy_tso.report_factory import EXIT_CODES, ReportFactory

logger = logging.getLogger(__name__)

USAGE_ERROR = EXIT_CODES['error']


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _schedule(text: str):
    try:
        return parse_schedule(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error status"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='lazy-tso', description='Lazy TSO reachability checker')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    check = commands.add_parser('check', help='analyse one program')
    check.add_argument('file', type=Path)
    check.add_argument('--mode', choices=MODES, default='lazy')
    check.add_argument('--unroll', type=_schedule, help='unrolling schedule LO:HI or a,b,c')
    check.add_argument('--delete-first-store', action='store_true')
    check.add_argument('--witnesses-per-round', type=_positive)
    check.add_argument('--max-iterations', type=_positive)
    check.add_argument('--state-budget', type=_positive)
    check.add_argument('--buffer-bound', type=_positive)
    check.add_argument('--oracle-bound', type=_positive)
    check.add_argument('--por', action='store_true', help='partial-order reduction')
    check.add_argument('--dump-witness', action='store_true', help='print the witness (robust mode)')
    check.add_argument('--json', type=Path, help='write the report as JSON')

    bench_cmd = commands.add_parser('bench', help='run a corpus directory')
    bench_cmd.add_argument('directory', type=Path)
    bench_cmd.add_argument('--workers', type=_positive)
    bench_cmd.add_argument('--json', type=Path, help='write all reports as JSON')
    return parser


def _write(path: Path, text: str) -> None:
    path.write_text(text + "\n", encoding='utf-8')
    logger.info(f"📊 Report written to {path}")


def run_check(args: argparse.Namespace, settings: Settings) -> int:
    options = CheckOptions(
        mode=args.mode,
        unroll=args.unroll,
        delete_first_store=args.delete_first_store,
        witnesses_per_round=args.witnesses_per_round,
        max_iterations=args.max_iterations,
        state_budget=args.state_budget,
        buffer_bound=args.buffer_bound,
        oracle_bound=args.oracle_bound,
        por=args.por,
        dump_witness=args.dump_witness,
    )
    try:
        report, witness_text = check_file(args.file, options, settings)
    except OSError as e:
        logger.error(f"❌ Cannot read {args.file}: {e}")
        return USAGE_ERROR
    except ProgramValidationError as e:
        logger.error(f"❌ {args.file}: {len(e.diagnostics)} problems")
        for diagnostic in e.diagnostics:
            logger.error(f"   {diagnostic}")
        return USAGE_ERROR
    except LazyTsoError as e:
        logger.error(f"❌ {args.file}: {e}")
        return USAGE_ERROR

    print(ReportFactory.summary(report))
    if witness_text:
        print(witness_text, end='')
    if args.json:
        _write(args.json, report.to_json())
    return report.exit_code


def run_bench(args: argparse.Namespace, settings: Settings) -> int:
    try:
        rows, status = bench(args.directory, settings, args.workers)
    except LazyTsoError as e:
        logger.error(f"❌ {e}")
        return USAGE_ERROR
    print(ReportFactory.table(rows))
    if args.json:
        _write(args.json, ReportFactory.bench_json(rows))
    return status


def run(argv: Optional[List[str]] = None, settings: Optional[Settings] = None) -> int:
    """
    Parse arguments and dispatch

    Args:
        argv: arguments without the program name (defaults to sys.argv[1:])
        settings: preloaded settings (loaded from the environment when None)

    Returns:
        int: process exit status
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE_ERROR
    settings = settings or load_settings()
    if args.command == 'check':
        return run_check(args, settings)
    return run_bench(args, settings)
