"""CSV tables (17 significant digits, LF endings) and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import subprocess
from pathlib import Path

from .. import __version__


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float) or hasattr(v, "dtype") and getattr(v, "dtype").kind == "f":
        return format(float(v), ".17g")
    return str(v)


def write_csv(filename, header, rows) -> Path:
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(filename) -> tuple[list[str], list[list[str]]]:
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def version_string() -> str:
    """Package version, with `git describe` appended when available."""
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                              capture_output=True, text=True, timeout=5,
                              cwd=Path(__file__).resolve().parent)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(out_dir, experiment: str, config_text: str, seed: int, threads: int,
                   files: list[str]) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "experiment": experiment,
        "config_hash": config_hash(config_text),
        "seed": int(seed),
        "threads": int(threads),
        "version": version_string(),
        "files": files,
        "config": config_text,
    }
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path
