# src/stainreg/data/atomic.py
import contextlib
import logging
import os
import tempfile

_log = logging.getLogger(__name__)


def atomic_write_bytes(file_path: str | os.PathLike, payload: bytes) -> None:
    """
    Replaces `file_path` with `payload` in one step.

    The bytes go to a sibling temp file that is synced before os.replace();
    readers see either the old file or the complete new one.
    """
    file_path = os.fspath(file_path)
    directory = os.path.dirname(file_path) or "."
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=f"{os.path.basename(file_path)}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as file:
            file.write(payload)
            file.flush()
            os.fsync(file.fileno())
        os.replace(tmp_path, file_path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.remove(tmp_path)
        raise
    _log.debug("Wrote %d bytes to %s", len(payload), file_path)


def atomic_write_text(file_path: str | os.PathLike, text: str) -> None:
    """UTF-8 text variant of atomic_write_bytes. Line endings are written as given."""
    atomic_write_bytes(file_path, text.encode("utf-8"))
