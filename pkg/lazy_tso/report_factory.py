"""
Lazy TSO - Report Factory
Run reports: construction, JSON round-trip and human-readable rendering
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import psutil

logger = logging.getLogger(__name__)

VERDICTS = ('reachable', 'unreachable', 'safe-up-to-k', 'inconclusive', 'error')
ROBUSTNESS_VERDICTS = ('robust', 'non-robust')

EXIT_CODES = {
    'unreachable': 0,
    'robust': 0,
    'reachable': 1,
    'non-robust': 1,
    'inconclusive': 2,
    'safe-up-to-k': 2,
    'error': 3,
}


def exit_code(verdict: str) -> int:
    """Process exit status for a verdict"""
    return EXIT_CODES[verdict]


def memory_mb() -> float:
    """Resident memory of this process in MiB"""
    try:
        return round(psutil.Process().memory_info().rss / (1024 * 1024), 1)
    except psutil.Error as e:
        logger.warning(f"⚠️ Memory reading failed: {e}")
        return 0.0


@dataclass
class RunReport:
    """One analysis run; JSON keys are the field names"""
    program: str
    mode: str
    verdict: str
    trace: List[str] = field(default_factory=list)
    iterations: int = 0
    sigmas: List[List[str]] = field(default_factory=list)
    states_explored: int = 0
    wall_time: float = 0.0
    sc_queries: int = 0
    threads: int = 0
    states: int = 0
    transitions: int = 0
    memory_mb: float = 0.0
    bound: Optional[int] = None
    error: Optional[str] = None

    def __post_init__(self):
        if self.verdict not in VERDICTS + ROBUSTNESS_VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def exit_code(self) -> int:
        return exit_code(self.verdict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunReport":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown report keys {sorted(unknown)}")
        values = dict(data)
        values['trace'] = list(values.get('trace', []))
        values['sigmas'] = [list(sigma) for sigma in values.get('sigmas', [])]
        return cls(**values)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


@dataclass
class BenchRow:
    report: RunReport
    expected: Optional[str]

    @property
    def matches(self) -> bool:
        return self.expected is not None and self.report.verdict == self.expected


class ReportFactory:
    """Consistent rendering of run reports and bench tables"""

    MARKERS = {
        'reachable': '❌',
        'non-robust': '❌',
        'unreachable': '✅',
        'robust': '✅',
        'safe-up-to-k': '⚠️',
        'inconclusive': '⚠️',
        'error': '💥',
    }

    TABLE_COLUMNS = ('Program', 'T', 'St', 'Tr', 'RQ', 'Verdict', 'Expected', 'Time', 'Mem')

    @staticmethod
    def summary(report: RunReport) -> str:
        """
        Multi-line human summary of one run

        Args:
            report: finished run

        Returns:
            str: verdict line followed by statistics and the trace skeleton
        """
        marker = ReportFactory.MARKERS.get(report.verdict, '')
        verdict = report.verdict
        if verdict == 'safe-up-to-k' and report.bound is not None:
            verdict = f"safe up to k={report.bound}"
        lines = [f"{marker} {report.program} [{report.mode}]: {verdict}"]
        lines.append(f"   threads={report.threads} states={report.states} transitions={report.transitions}")
        lines.append(f"   explored={report.states_explored} sc_queries={report.sc_queries} "
                     f"iterations={report.iterations} time={report.wall_time:.3f}s mem={report.memory_mb}MiB")
        for i, sigma in enumerate(report.sigmas, start=1):
            lines.append(f"   σ{i}: {' '.join(sigma)}")
        if report.trace:
            lines.append("   trace:")
            lines.extend(f"     {step}" for step in report.trace)
        if report.error:
            lines.append(f"   error: {report.error}")
        return "\n".join(lines)

    @staticmethod
    def table(rows: List[BenchRow]) -> str:
        """Fixed-width bench table, rows in the given order"""
        cells = [list(ReportFactory.TABLE_COLUMNS)]
        for row in rows:
            r = row.report
            expected = row.expected or '-'
            if row.expected is not None and not row.matches:
                expected += ' ✗'
            cells.append([r.program, str(r.threads), str(r.states), str(r.transitions),
                          str(r.sc_queries), r.verdict, expected,
                          f"{r.wall_time:.2f}s", f"{r.memory_mb:.0f}M"])
        widths = [max(len(line[i]) for line in cells) for i in range(len(cells[0]))]
        rendered = ["  ".join(text.ljust(width) for text, width in zip(line, widths)).rstrip()
                    for line in cells]
        rendered.insert(1, "  ".join("-" * width for width in widths))
        return "\n".join(rendered)

    @staticmethod
    def bench_json(rows: List[BenchRow]) -> str:
        payload = [dict(row.report.to_dict(), expected=row.expected) for row in rows]
        return json.dumps(payload, indent=2, ensure_ascii=False)
