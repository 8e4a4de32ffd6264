"""Scene-description context: backends and a persistent cache.

A backend turns an image plus a prompt into text. The cache is keyed by
``sample_id``; the first stored record for an id wins, so repeated and
concurrent requests converge on one text.

Cache files are JSON lines of ``{"sample_id", "provider_tag", "text"}``.
JSON escaping keeps newlines and any Unicode in ``text`` on one line.

Wiring a real multimodal model only needs a callable
``fn(image_bytes: bytes, prompt: str) -> str`` passed to
:class:`ExternalBackend`.
"""

from __future__ import annotations

import io
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Protocol

DEFAULT_PROMPT = "Describe how the persons are interacting in the scene."
PROVIDER_TAGS = ("synthetic-template", "external-mllm", "fixture", "cache")


class BackendError(RuntimeError):
    def __init__(self, sample_id: str, message: str):
        self.sample_id = sample_id
        super().__init__(f"context backend failed for {sample_id!r}: {message}")


class CacheCorruptError(RuntimeError):
    pass


class DuplicateRecordError(ValueError):
    def __init__(self, sample_id: str):
        self.sample_id = sample_id
        super().__init__(f"duplicate sample_id {sample_id!r}")


@dataclass(frozen=True)
class ContextRequest:
    sample_id: str
    image_ref: object = None
    prompt: str = DEFAULT_PROMPT

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class ContextRecord:
    sample_id: str
    text: str
    provider_tag: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text:
            raise ValueError(f"empty context text for {self.sample_id!r}")
        if self.provider_tag not in PROVIDER_TAGS:
            raise ValueError(f"unknown provider tag {self.provider_tag!r}")


class Backend(Protocol):
    tag: str

    def describe(self, request: ContextRequest) -> str: ...


class SyntheticBackend:
    """Describes synthetic scenes with the templated describer."""

    tag = "synthetic-template"

    def __init__(self, scenes: Mapping[str, object], gaze_noise: float = 0.0):
        self.scenes = scenes
        self.gaze_noise = gaze_noise

    def describe(self, request):
        from .synth import describe_scene

        return describe_scene(self.scenes[request.sample_id], self.gaze_noise)


class FixtureBackend:
    """Replays recorded descriptions from a mapping or a cache-format file."""

    tag = "fixture"

    def __init__(self, fixtures):
        if isinstance(fixtures, (str, Path)):
            fixtures = {r.sample_id: r.text for r in read_records(fixtures)}
        self.fixtures = dict(fixtures)

    def describe(self, request):
        return self.fixtures[request.sample_id]


class ExternalBackend:
    """Adapter for an external multimodal model given as ``fn(image_bytes, prompt)``."""

    tag = "external-mllm"

    def __init__(self, fn: Callable[[bytes, str], str]):
        self.fn = fn

    def describe(self, request):
        return self.fn(_image_bytes(request.image_ref), request.prompt)


def _image_bytes(ref) -> bytes:
    if ref is None:
        return b""
    if isinstance(ref, (bytes, bytearray)):
        return bytes(ref)
    if isinstance(ref, (str, Path)):
        return Path(ref).read_bytes()
    import numpy as np
    from PIL import Image

    arr = np.clip(np.rint(np.asarray(ref) * 255), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _record_to_line(rec: ContextRecord) -> str:
    return json.dumps({"sample_id": rec.sample_id, "provider_tag": rec.provider_tag,
                       "text": rec.text}, ensure_ascii=False)


def write_records(records: Iterable[ContextRecord], path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(_record_to_line(rec) + "\n")
            n += 1
    return n


def read_records(path) -> List[ContextRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                records.append(ContextRecord(d["sample_id"], d["text"], d["provider_tag"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise CacheCorruptError(f"{path}:{lineno}: {e}") from None
    return records


class ContextCache:
    """Thread-safe ``sample_id -> ContextRecord`` store.

    With a ``path`` the cache is loaded from and appended to that file.
    """

    def __init__(self, path=None):
        self._records: Dict[str, ContextRecord] = {}
        self._lock = threading.Lock()
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            for rec in read_records(self.path):
                if rec.sample_id in self._records:
                    raise CacheCorruptError(f"{self.path}: duplicate sample_id {rec.sample_id!r}")
                self._records[rec.sample_id] = rec

    def __len__(self):
        return len(self._records)

    def __contains__(self, sample_id):
        return sample_id in self._records

    def get(self, sample_id: str) -> Optional[ContextRecord]:
        return self._records.get(sample_id)

    def records(self) -> List[ContextRecord]:
        with self._lock:
            return list(self._records.values())

    def put_if_absent(self, rec: ContextRecord) -> ContextRecord:
        """Store ``rec`` unless the id is taken; return the stored record."""
        with self._lock:
            existing = self._records.get(rec.sample_id)
            if existing is not None:
                return existing
            self._records[rec.sample_id] = rec
            if self.path is not None:
                with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(_record_to_line(rec) + "\n")
            return rec


def get_context(request: ContextRequest, backend: Backend, cache: ContextCache) -> ContextRecord:
    cached = cache.get(request.sample_id)
    if cached is not None:
        return ContextRecord(cached.sample_id, cached.text, "cache")
    try:
        text = backend.describe(request)
    except Exception as e:  # noqa: BLE001 - any backend failure is reported with the id
        raise BackendError(request.sample_id, f"{type(e).__name__}: {e}") from e
    if not isinstance(text, str) or not text.strip():
        raise BackendError(request.sample_id, "backend returned empty text")
    return cache.put_if_absent(ContextRecord(request.sample_id, text, backend.tag))


def export_cache(cache: ContextCache, path) -> int:
    return write_records(sorted(cache.records(), key=lambda r: r.sample_id), path)


def import_cache(path, cache: ContextCache = None) -> int:
    """Load records from ``path`` into ``cache``; duplicates are an error."""
    records = read_records(path)
    seen = set()
    for rec in records:
        if rec.sample_id in seen or (cache is not None and rec.sample_id in cache):
            raise DuplicateRecordError(rec.sample_id)
        seen.add(rec.sample_id)
    if cache is not None:
        for rec in records:
            cache.put_if_absent(rec)
    return len(records)
