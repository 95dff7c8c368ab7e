import os
import tempfile
from pathlib import Path

from .errors import DatasetIOError


def atomic_write_text(path, text: str, newline: str | None = None) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    except OSError as e:
        raise DatasetIOError(f"cannot write {path}: {e}") from e
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline=newline) as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as e:
        Path(tmp).unlink(missing_ok=True)
        raise DatasetIOError(f"cannot write {path}: {e}") from e
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
