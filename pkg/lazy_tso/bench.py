"""
Lazy TSO - Bench
Corpus discovery and the benchmark driver
"""

import asyncio
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from lazy_tso.checker import MODES, CheckOptions, check_file
from lazy_tso.config import Settings, parse_schedule
from lazy_tso.errors import CorpusError, LazyTsoError
from lazy_tso.report_factory import VERDICTS, BenchRow, RunReport

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = '.expect.json'


class CorpusDiscovery:
    """
    Locates corpus programs and their expectation sidecars.
    Every `NAME.prog` needs a `NAME.expect.json` next to it.
    """

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)

    def programs(self) -> List[Path]:
        """
        Program files of the corpus, ordered by file name

        Returns:
            List of `.prog` paths

        Raises:
            CorpusError: the directory does not exist
        """
        if not self.directory.is_dir():
            raise CorpusError("not a directory", str(self.directory))
        found = sorted(self.directory.glob('*.prog'), key=lambda p: p.name)
        logger.info(f"🔍 Found {len(found)} corpus programs in {self.directory}")
        return found

    @staticmethod
    def sidecar(program: Path) -> Path:
        return program.with_name(program.stem + SIDECAR_SUFFIX)

    def expectation(self, program: Path) -> Dict[str, Any]:
        """
        Read and check the sidecar of one program

        Returns:
            Dict with `verdict`, `mode`, optional `unroll` and `source`
        """
        path = self.sidecar(program)
        if not path.is_file():
            raise CorpusError("missing expectation sidecar", str(program))
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise CorpusError(f"unreadable sidecar: {e}", str(path)) from e
        if data.get('verdict') not in VERDICTS and data.get('verdict') not in ('robust', 'non-robust'):
            raise CorpusError(f"sidecar verdict {data.get('verdict')!r} is not a verdict", str(path))
        if data.get('mode', 'lazy') not in MODES:
            raise CorpusError(f"sidecar mode {data.get('mode')!r} is not a mode", str(path))
        return data


def run_entry(path: str, settings: Settings) -> BenchRow:
    """Check one corpus program; failures become error rows"""
    program = Path(path)
    discovery = CorpusDiscovery(program.parent)
    expected: Optional[str] = None
    try:
        expectation = discovery.expectation(program)
        expected = expectation['verdict']
        unroll = expectation.get('unroll')
        options = CheckOptions(mode=expectation.get('mode', 'lazy'),
                               unroll=parse_schedule(unroll) if unroll else None)
        report, _ = check_file(program, options, settings)
    except (LazyTsoError, ValueError, OSError) as e:
        logger.error(f"❌ {program.name}: {e}")
        report = RunReport(program=program.stem, mode='-', verdict='error', error=str(e))
    row = BenchRow(report=report, expected=expected)
    if not row.matches:
        logger.warning(f"⚠️ {program.stem}: got {report.verdict}, expected {expected}")
    return row


async def run_bench(directory: Union[str, Path], settings: Settings,
                    workers: Optional[int] = None) -> List[BenchRow]:
    """
    Check every corpus program, concurrently when workers > 1

    Args:
        directory: corpus directory
        settings: shared settings
        workers: process count (defaults to settings.bench_workers)

    Returns:
        List[BenchRow]: one row per program, ordered by file name
    """
    paths = [str(p) for p in CorpusDiscovery(directory).programs()]
    workers = workers or settings.bench_workers
    if workers <= 1:
        return [run_entry(path, settings) for path in paths]

    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        tasks = [loop.run_in_executor(pool, run_entry, path, settings) for path in paths]
        return list(await asyncio.gather(*tasks))


def bench(directory: Union[str, Path], settings: Settings, workers: Optional[int] = None) -> Tuple[List[BenchRow], int]:
    """Run the corpus; exit status 0 iff every verdict matches its sidecar"""
    rows = asyncio.run(run_bench(directory, settings, workers))
    mismatches = [row for row in rows if not row.matches]
    if mismatches:
        logger.error(f"❌ {len(mismatches)} of {len(rows)} corpus verdicts differ from their sidecars")
    else:
        logger.info(f"✅ All {len(rows)} corpus verdicts match")
    return rows, (1 if mismatches else 0)
