"""
Lazy TSO - Configuration
Environment-driven settings (.env aware) and logging setup
"""

import logging
import os
import sys
from dataclasses import dataclass
from typing import Optional, Tuple

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    """Read an integer environment variable, falling back on bad input"""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"⚠️ Ignoring non-integer {name}={raw!r}, using {default}")
        return default


def parse_schedule(text: str) -> Tuple[int, ...]:
    """
    Parse an unroll schedule

    Args:
        text: "LO:HI" for an inclusive range, or a comma separated list "3,7,9"

    Returns:
        Tuple[int, ...]: ascending bounds, all >= 1
    """
    text = text.strip()
    if ":" in text:
        lo_text, hi_text = text.split(":", 1)
        lo, hi = int(lo_text), int(hi_text)
        bounds = tuple(range(lo, hi + 1))
    else:
        bounds = tuple(sorted({int(part) for part in text.split(",") if part.strip()}))
    if not bounds or bounds[0] < 1:
        raise ValueError(f"invalid unroll schedule {text!r}")
    return bounds


@dataclass(frozen=True)
class Settings:
    """
    RUNTIME SETTINGS
    - MODE: production or development (development turns on replay/consistency checks)
    - Budgets and bounds for explorers and the witness search
    - Defaults for the lazy loop (witnesses per round, iteration cap, unroll schedule)
    """
    mode: str = "production"
    state_budget: Optional[int] = None
    buffer_bound: Optional[int] = None
    witnesses_per_round: int = 4
    max_iterations: int = 64
    unroll: Tuple[int, ...] = tuple(range(1, 13))
    oracle_bound: int = 24
    bench_workers: int = 1
    property_cases: int = 500
    log_level: str = "INFO"
    log_file: str = "lazy_tso.log"

    @property
    def development(self) -> bool:
        return self.mode == "development"


def load_settings(env_file: Optional[str] = None) -> Settings:
    """
    Build settings from the environment (and an optional .env file)

    Args:
        env_file: explicit dotenv path; the default search applies when None

    Returns:
        Settings: frozen settings snapshot
    """
    load_dotenv(env_file)

    unroll_text = os.getenv("LAZY_TSO_UNROLL", "1:12")
    try:
        unroll = parse_schedule(unroll_text)
    except ValueError:
        logger.warning(f"⚠️ Ignoring LAZY_TSO_UNROLL={unroll_text!r}, using 1:12")
        unroll = tuple(range(1, 13))

    return Settings(
        mode=os.getenv("LAZY_TSO_MODE", "production"),
        state_budget=_env_int("LAZY_TSO_STATE_BUDGET", None),
        buffer_bound=_env_int("LAZY_TSO_BUFFER_BOUND", None),
        witnesses_per_round=max(1, _env_int("LAZY_TSO_WITNESSES_PER_ROUND", 4) or 1),
        max_iterations=_env_int("LAZY_TSO_MAX_ITERATIONS", 64) or 64,
        unroll=unroll,
        oracle_bound=_env_int("LAZY_TSO_ORACLE_BOUND", 24) or 24,
        bench_workers=max(1, _env_int("LAZY_TSO_BENCH_WORKERS", 1) or 1),
        property_cases=_env_int("LAZY_TSO_PROPERTY_CASES", 500) or 500,
        log_level=os.getenv("LAZY_TSO_LOG_LEVEL", "INFO").upper(),
        log_file=os.getenv("LAZY_TSO_LOG_FILE", "lazy_tso.log"),
    )


def configure_logging(settings: Settings) -> None:
    """Configure root logging: file plus stdout, one shared format"""
    handlers = [logging.StreamHandler(sys.stdout)]
    if settings.log_file:
        try:
            handlers.insert(0, logging.FileHandler(settings.log_file))
        except OSError as e:
            print(f"⚠️ Cannot open log file {settings.log_file}: {e}")

    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
    )
