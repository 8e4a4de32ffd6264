"""Line-delimited sample manifests.

Each non-empty line is one JSON object (UTF-8). JSON string escaping covers
separators, quotes, newlines and arbitrary Unicode in ids, paths and context
text, so no custom escaping is needed.

Dyad record::

    {"sample_id": "s0", "image": "img/s0.png",
     "principal": [x_min, y_min, x_max, y_max],
     "associate": [x_min, y_min, x_max, y_max],
     "label": "Mutual", "context": "optional text"}

``label`` is a gaze-class tag, ``true``/``false`` for binary LAEO, or
``null``. ``context`` may be omitted. The first box is the principal.

GazeFollow record::

    {"sample_id": "g0", "image": "img/g0.png",
     "head": [x_min, y_min, x_max, y_max], "gaze_point": [gx, gy]}

A record without ``sample_id`` gets ``<file stem>:<line number>``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, List, Union

from .types import DyadSample, GazeClass, GazeFollowSample, HeadBox, ValidationError

SCHEMAS = ("dyad", "gazefollow")


class ManifestError(ValueError):
    def __init__(self, path, line: int, message: str, field: str = None):
        self.path = str(path)
        self.line = line
        self.field = field
        super().__init__(f"{path}:{line}: {message}")


def _label_from_json(value):
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, str):
        return GazeClass.from_tag(value)
    raise ValidationError("label", f"unsupported label {value!r}")


def _label_to_json(label):
    if label is None or isinstance(label, bool):
        return label
    return GazeClass(label).tag


def _parse_dyad(rec: dict, default_id: str) -> DyadSample:
    for key in ("image", "principal", "associate"):
        if key not in rec:
            raise ValidationError(key, "missing")
    try:
        principal = HeadBox.from_seq(rec["principal"])
    except ValidationError as e:
        raise ValidationError(f"principal.{e.field}", str(e)) from None
    try:
        associate = HeadBox.from_seq(rec["associate"])
    except ValidationError as e:
        raise ValidationError(f"associate.{e.field}", str(e)) from None
    context = rec.get("context")
    if context is not None and not isinstance(context, str):
        raise ValidationError("context", "must be a string")
    return DyadSample(
        sample_id=str(rec.get("sample_id", default_id)),
        image_ref=rec["image"],
        principal=principal,
        associate=associate,
        label=_label_from_json(rec.get("label")),
        context_text=context,
    )


def _parse_gazefollow(rec: dict, default_id: str) -> GazeFollowSample:
    for key in ("image", "head", "gaze_point"):
        if key not in rec:
            raise ValidationError(key, "missing")
    try:
        head = HeadBox.from_seq(rec["head"])
    except ValidationError as e:
        raise ValidationError(f"head.{e.field}", str(e)) from None
    return GazeFollowSample(
        sample_id=str(rec.get("sample_id", default_id)),
        image_ref=rec["image"],
        head=head,
        gaze_point=tuple(rec["gaze_point"]),
    )


def load_manifest(path, schema: str = "dyad") -> List[Union[DyadSample, GazeFollowSample]]:
    """Read and validate a manifest; samples are returned in file order."""
    if schema not in SCHEMAS:
        raise ValueError(f"schema must be one of {SCHEMAS}, got {schema!r}")
    path = Path(path)
    parse = _parse_dyad if schema == "dyad" else _parse_gazefollow
    samples = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(path, lineno, f"malformed record: {e.msg}") from None
            if not isinstance(rec, dict):
                raise ManifestError(path, lineno, "record is not an object")
            try:
                sample = parse(rec, f"{path.stem}:{lineno}")
            except ValidationError as e:
                raise ManifestError(path, lineno, str(e), field=e.field) from None
            except (TypeError, ValueError) as e:
                raise ManifestError(path, lineno, str(e)) from None
            if sample.sample_id in seen:
                raise ManifestError(path, lineno, f"duplicate sample_id {sample.sample_id!r}",
                                    field="sample_id")
            seen.add(sample.sample_id)
            samples.append(sample)
    return samples


def sample_to_record(sample) -> dict:
    if isinstance(sample, DyadSample):
        rec = {
            "sample_id": sample.sample_id,
            "image": str(sample.image_ref),
            "principal": list(sample.principal.as_tuple()),
            "associate": list(sample.associate.as_tuple()),
            "label": _label_to_json(sample.label),
        }
        if sample.context_text is not None:
            rec["context"] = sample.context_text
        return rec
    if isinstance(sample, GazeFollowSample):
        return {
            "sample_id": sample.sample_id,
            "image": str(sample.image_ref),
            "head": list(sample.head.as_tuple()),
            "gaze_point": list(sample.gaze_point),
        }
    raise TypeError(f"cannot serialize {type(sample).__name__}")


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False, separators=(", ", ": "))


def write_manifest(samples: Iterable, path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(dumps_record(sample_to_record(s)) + "\n")
            n += 1
    return n
