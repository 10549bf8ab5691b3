"""
CSV results with a reproducibility manifest, written atomically.
"""

import logging
import os
import tempfile
from dataclasses import dataclass
from typing import Optional

import pandas as pd

from src import __version__

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


@dataclass(frozen=True)
class RunManifest:
    """Identifies the inputs that produced a result file; contains no timestamps."""

    config_sha256: str
    seed: Optional[int]
    command: str
    version: str = __version__

    def line(self) -> str:
        seed = "none" if self.seed is None else str(self.seed)
        return (
            f"# nfris version={self.version} config_sha256={self.config_sha256} "
            f"seed={seed} command={self.command}"
        )


def write_csv(df: pd.DataFrame, path: str, manifest: RunManifest) -> str:
    """
    Write ``df`` to ``path`` preceded by the manifest comment line.

    The file is written to a temporary sibling and moved into place with
    ``os.replace`` so readers never observe a partial file.

    Returns:
        The path written
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".nfris-", suffix=".csv.tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(manifest.line() + "\n")
            df.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    logger.info(f"Wrote {len(df)} rows to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    """Read a result file, skipping the manifest line."""
    return pd.read_csv(path, comment="#")


def read_manifest(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.readline().rstrip("\n")
