"""
Lazy TSO - Checker
Runs one analysis mode on one program and produces its RunReport
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

from lazy_tso.config import Settings
from lazy_tso.errors import BoundExhausted, BudgetExhausted
from lazy_tso.lazy_engine import LazyConfig, semi_decide
from lazy_tso.oracle import dump_witness, find_witness
from lazy_tso.program_ir import Program, is_acyclic
from lazy_tso.program_parser import load_program
from lazy_tso.report_factory import RunReport, memory_mb
from lazy_tso.semantics import SC, TSO, reach

logger = logging.getLogger(__name__)

MODES = ('sc', 'tso-brute', 'lazy', 'robust')


@dataclass(frozen=True)
class CheckOptions:
    """Command-line choices; None falls back to the settings"""
    mode: str = 'lazy'
    unroll: Optional[Tuple[int, ...]] = None
    delete_first_store: bool = False
    witnesses_per_round: Optional[int] = None
    max_iterations: Optional[int] = None
    state_budget: Optional[int] = None
    buffer_bound: Optional[int] = None
    oracle_bound: Optional[int] = None
    por: bool = False
    dump_witness: bool = False


def lazy_config(options: CheckOptions, settings: Settings) -> LazyConfig:
    overrides = {'delete_first_store': options.delete_first_store, 'por': options.por}
    for name in ('unroll', 'witnesses_per_round', 'max_iterations', 'state_budget', 'oracle_bound'):
        value = getattr(options, name)
        if value is not None:
            overrides[name] = value
    return LazyConfig.from_settings(settings, **overrides)


def check_program(program: Program, name: str, options: CheckOptions,
                  settings: Settings) -> Tuple[RunReport, Optional[str]]:
    """
    Run the selected analysis

    Args:
        program: validated program
        name: label used in the report
        options: mode and overrides
        settings: environment defaults

    Returns:
        Tuple[RunReport, Optional[str]]: report plus a witness dump when requested

    Raises:
        LazyTsoError: input problems (mapped to exit code 3 by the caller)
    """
    if options.mode not in MODES:
        raise ValueError(f"unknown mode {options.mode!r}")

    report = RunReport(program=name, mode=options.mode, verdict='inconclusive',
                       threads=len(program.threads), states=program.state_count,
                       transitions=program.instruction_count)
    extra: Optional[str] = None
    budget = options.state_budget if options.state_budget is not None else settings.state_budget
    buffer_bound = options.buffer_bound if options.buffer_bound is not None else settings.buffer_bound
    started = time.perf_counter()
    logger.info(f"🔍 Checking {name} in {options.mode} mode")

    try:
        if options.mode in ('sc', 'tso-brute'):
            verdict = reach(program, SC if options.mode == 'sc' else TSO, limit=budget,
                            buffer_bound=buffer_bound, por=options.por, verify=settings.development)
            report.verdict = 'reachable' if verdict.reachable else 'unreachable'
            report.states_explored = verdict.states_explored
            if verdict.trace is not None:
                report.trace = [e.inst for e in verdict.trace.events if not e.is_flush]

        elif options.mode == 'lazy':
            cfg = lazy_config(options, settings)
            verdict = semi_decide(program, cfg)
            report.verdict = verdict.outcome
            report.trace = list(verdict.skeleton)
            report.iterations = verdict.iterations
            report.sigmas = [list(sigma) for sigma in verdict.sigmas]
            report.sc_queries = verdict.sc_queries
            report.states_explored = verdict.states_explored
            if verdict.outcome == 'safe-up-to-k':
                report.bound = verdict.bound

        else:
            bound = None
            if not is_acyclic(program):
                bound = options.oracle_bound if options.oracle_bound is not None else settings.oracle_bound
                report.bound = bound
            witness = find_witness(program, bound)
            report.verdict = 'robust' if witness is None else 'non-robust'
            if witness is not None:
                report.sigmas = [list(witness.sigma)]
                report.trace = [str(e) for e in witness.events]
                if options.dump_witness:
                    extra = dump_witness(witness)

    except (BudgetExhausted, BoundExhausted) as e:
        logger.warning(f"⚠️ {name}: {e}")
        report.verdict = 'inconclusive'
        report.error = str(e)

    report.wall_time = round(time.perf_counter() - started, 6)
    report.memory_mb = memory_mb()
    logger.info(f"📊 {name}: {report.verdict} in {report.wall_time:.3f}s")
    return report, extra


def check_file(path: Union[str, Path], options: CheckOptions,
               settings: Settings) -> Tuple[RunReport, Optional[str]]:
    """Parse a program file and check it (see check_program)"""
    path = Path(path)
    program = load_program(path)
    return check_program(program, path.stem, options, settings)
