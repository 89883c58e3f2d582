"""Safe file operations for config files and reports."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)


def read_file_safe(path: Path | str, encoding: str = "utf-8") -> str | None:
    """Read a text file, or return None (with a logged reason) when it cannot be read."""
    path = Path(path)

    if not path.is_file():
        logger.warning(f"Not a readable file: {path}")
        return None

    try:
        return path.read_text(encoding=encoding)
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Cannot read {path}: {e}")
        return None


def write_file_safe(
    path: Path | str,
    content: str,
    encoding: str = "utf-8",
    create_dirs: bool = True,
) -> bool:
    """
    Atomically replace ``path`` with ``content``.

    The text goes to a temporary file in the target directory, which is then
    renamed over ``path``; an interrupted run leaves any previous report
    intact. Line endings are always "\\n" so identical runs give
    byte-identical files.

    Returns:
        True if the file was written, False otherwise
    """
    path = Path(path)
    tmp_name: str | None = None

    try:
        if create_dirs:
            path.parent.mkdir(parents=True, exist_ok=True)

        with tempfile.NamedTemporaryFile(
            "w",
            encoding=encoding,
            newline="\n",
            dir=path.parent,
            prefix=f".{path.name}.",
            suffix=".tmp",
            delete=False,
        ) as f:
            tmp_name = f.name
            f.write(content)
        os.replace(tmp_name, path)
        logger.debug(f"Wrote {len(content)} characters to {path}")
        return True
    except OSError as e:
        logger.error(f"Cannot write {path}: {e}")
        if tmp_name is not None:
            Path(tmp_name).unlink(missing_ok=True)
        return False
