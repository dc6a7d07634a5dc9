#!/usr/bin/env python3
"""
Lazy TSO - Reachability checker for programs under Total Store Order
Lazy SC-query loop, robustness oracle, program extension and corpus bench
"""

import logging
import sys

from dotenv import load_dotenv

from lazy_tso.cli import run
from lazy_tso.config import configure_logging, load_settings

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def main() -> int:
    """Entry point for the `lazy-tso` console script"""
    settings = load_settings()
    configure_logging(settings)
    logger.debug(f"Runtime mode set to: {settings.mode}")
    return run(sys.argv[1:], settings)


if __name__ == "__main__":
    sys.exit(main())
