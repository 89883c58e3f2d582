"""Utility modules for misclass-qlearn."""

from misclass_qlearn.utils.file_ops import read_file_safe, write_file_safe
from misclass_qlearn.utils.logger import get_logger, setup_logging
from misclass_qlearn.utils.rng import RandomStreams

__all__ = [
    "RandomStreams",
    "get_logger",
    "read_file_safe",
    "setup_logging",
    "write_file_safe",
]
