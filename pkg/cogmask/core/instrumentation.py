"""
Logging setup and timing helpers
"""
import logging
import time
from contextlib import contextmanager
from typing import Iterator, Optional

from cogmask.core.config import settings


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stream handler on the package logger"""
    name = (level or settings.LOG_LEVEL).upper()
    root = logging.getLogger("cogmask")
    root.setLevel(getattr(logging, name, logging.INFO))
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(settings.LOG_FORMAT))
        root.addHandler(handler)
    root.propagate = False


@contextmanager
def timed_cell(name: str, logger: Optional[logging.Logger] = None) -> Iterator[dict]:
    """Log start and elapsed time of an experiment cell; yields a dict receiving the elapsed seconds"""
    log = logger or logging.getLogger("cogmask.cells")
    record = {"name": name, "elapsed_s": 0.0}
    start_time = time.perf_counter()
    log.info("cell %s started", name)
    try:
        yield record
    except Exception:
        record["elapsed_s"] = time.perf_counter() - start_time
        log.warning("cell %s failed after %.3fs", name, record["elapsed_s"])
        raise
    record["elapsed_s"] = time.perf_counter() - start_time
    log.info("cell %s finished in %.3fs", name, record["elapsed_s"])
