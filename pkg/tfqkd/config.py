# tfqkd/config.py
# Environment-driven settings, read from the process environment or a local
# .env file.

import logging
import os
import sys

from dotenv import load_dotenv

load_dotenv()

DATABASE_URL = os.getenv("TFQKD_DATABASE_URL", "sqlite:///tfqkd_runs.db")
LOG_LEVEL = os.getenv("TFQKD_LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("TFQKD_DEFAULT_SEED", "7"))
WORKERS = int(os.getenv("TFQKD_WORKERS", "1"))


def configure_logging(level: str = None) -> None:
    """Route log records to stderr so stdout stays clean for reports."""
    level = (level or LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        stream=sys.stderr,
        format="%(levelname)-5.5s [%(name)s] %(message)s",
    )
