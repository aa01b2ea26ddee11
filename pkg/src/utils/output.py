"""CSV emission with the effective configuration echoed as a comment header."""

from pathlib import Path
from typing import Union

import pandas as pd


def write_csv(frame: pd.DataFrame, path: Union[str, Path], config_text: str = "") -> Path:
    """
    Write `frame` to `path` preceded by `# `-prefixed config lines.

    UTF-8, LF line endings, no index column. Parent directories are created.

    Raises:
        OSError: if the file cannot be written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in config_text.splitlines():
            f.write(f"# {line}".rstrip() + "\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read a CSV written by write_csv, skipping the comment header."""
    return pd.read_csv(path, comment="#")
