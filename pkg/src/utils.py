# src/utils.py

import logging
import os
from typing import Optional

from dotenv import load_dotenv  # make sure python-dotenv is installed

logger = logging.getLogger(__name__)

OUTPUT_DIR_VAR = "WIRED_OUTPUT_DIR"
WORKERS_VAR = "WIRED_WORKERS"


def load_env(dotenv_path: Optional[str] = None) -> None:
    """
    Load environment variables from a .env file.
    If dotenv_path is None, it loads from the default location.
    This should be called once at the start of the program.
    """
    load_dotenv(dotenv_path)


def project_root() -> str:
    return os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))


def output_dir() -> str:
    """
    Default directory for reports: $WIRED_OUTPUT_DIR if set, otherwise
    data/processed under the project root.
    """
    configured = os.getenv(OUTPUT_DIR_VAR)
    if configured:
        return os.path.abspath(configured)
    return os.path.join(project_root(), "data", "processed")


def resolve_output_path(path: str) -> str:
    """Relative output paths land in output_dir(); absolute ones are kept."""
    if os.path.isabs(path):
        return path
    return os.path.join(output_dir(), path)


def default_workers() -> int:
    """
    Worker processes for matrix runs, from $WIRED_WORKERS (default 1).
    Raises a RuntimeError if the variable is not a positive integer.
    """
    raw = os.getenv(WORKERS_VAR)
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise RuntimeError(f"{WORKERS_VAR} must be a positive integer, got {raw!r}") from None
    if workers < 1:
        raise RuntimeError(f"{WORKERS_VAR} must be a positive integer, got {raw!r}")
    return workers
