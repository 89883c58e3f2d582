"""Logging configuration for misclass-qlearn.

Replications run on worker threads, so records carry the replication being
computed (``-`` outside one) and the verbose format shows it next to the
thread name. Python warnings, such as numpy overflow warnings raised inside
the optimizer, are routed through the same handler.
"""

from __future__ import annotations

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from typing import TextIO

PACKAGE_LOGGER = "misclass_qlearn"
WARNINGS_LOGGER = "py.warnings"

DEFAULT_FORMAT = (
    "%(asctime)s - %(threadName)s - rep %(replication)s - %(name)s - %(levelname)s - %(message)s"
)
SIMPLE_FORMAT = "%(levelname)s: %(message)s"

_replication: ContextVar[int | None] = ContextVar("replication", default=None)


class ReplicationFilter(logging.Filter):
    """Stamp each record with the current replication index."""

    def filter(self, record: logging.LogRecord) -> bool:
        index = _replication.get()
        record.replication = "-" if index is None else str(index)
        return True


@contextmanager
def replication_context(index: int) -> Iterator[None]:
    """Tag log records emitted in this block (on this thread) with ``index``."""
    token = _replication.set(index)
    try:
        yield
    finally:
        _replication.reset(token)


def setup_logging(
    level: int | str = logging.INFO,
    format_string: str | None = None,
    stream: TextIO | None = None,
    quiet: bool = False,
) -> None:
    """
    Configure the package logger and captured warnings.

    Args:
        level: Logging level (e.g., logging.INFO, "DEBUG")
        format_string: Custom format string (uses default if None)
        stream: Output stream (defaults to stderr)
        quiet: If True, suppress all output except errors
    """
    if quiet:
        level = logging.ERROR

    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)

    if format_string is None:
        format_string = SIMPLE_FORMAT if level >= logging.INFO else DEFAULT_FORMAT

    if stream is None:
        stream = sys.stderr

    handler = logging.StreamHandler(stream)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(format_string))
    handler.addFilter(ReplicationFilter())

    # captureWarnings(True) is a no-op while an earlier hook is installed.
    logging.captureWarnings(False)
    logging.captureWarnings(True)
    for name in (PACKAGE_LOGGER, WARNINGS_LOGGER):
        target = logging.getLogger(name)
        target.setLevel(level)
        target.handlers.clear()
        target.addHandler(handler)
        target.propagate = False


def get_logger(name: str) -> logging.Logger:
    """Logger under the package namespace (typically called with __name__)."""
    if not name.startswith(PACKAGE_LOGGER):
        name = f"{PACKAGE_LOGGER}.{name}"

    return logging.getLogger(name)
