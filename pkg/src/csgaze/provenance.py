"""Run manifests: what a command read, wrote and with which settings."""

from __future__ import annotations

import hashlib
import json
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def digest_inputs(paths) -> Dict[str, str]:
    """Digest files; a directory digests its ``*.jsonl`` files (images are
    referenced from those and hashing thousands of rasters is slow)."""
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.glob("*.jsonl")):
                out[str(f)] = file_digest(f)
        elif p.exists():
            out[str(p)] = file_digest(p)
    return out


def version_stamp() -> str:
    stamp = f"csgaze {__version__}"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        if rev.returncode == 0 and rev.stdout.strip():
            stamp += f" ({rev.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return stamp


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    version: str = field(default_factory=version_stamp)
    wall_time: Optional[float] = None
    argv: List[str] = field(default_factory=list)

    def __post_init__(self):
        self._t0 = time.perf_counter()

    def finish(self, out_dir) -> Path:
        self.wall_time = round(time.perf_counter() - self._t0, 3)
        path = Path(out_dir) / "run_manifest.json"
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def read(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        wall = d.pop("wall_time", None)
        m = cls(**d)
        m.wall_time = wall
        return m
