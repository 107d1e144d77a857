"""JSONL and JSON output with version headers, atomic writes and schema checks."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

import jsonschema

from . import __version__


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def header(schema: str, config_echo: dict) -> dict:
    return {"record": "header", "schema": schema, "tool_version": __version__, "config_echo": config_echo}


def write_jsonl(path: str | Path, records: Iterable[dict], schema: str, config_echo: dict) -> int:
    """Write a header line followed by ``records``; returns the record count."""
    lines = [_dumps(header(schema, config_echo))]
    n = 0
    for rec in records:
        lines.append(_dumps(rec))
        n += 1
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))
    return n


def write_json(path: str | Path, obj: dict) -> None:
    atomic_write_bytes(path, (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n").encode("utf-8"))


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, record) for every non-header, non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if isinstance(rec, dict) and rec.get("record") == "header":
                continue
            yield lineno, rec


def read_jsonl(path: str | Path) -> list[dict]:
    return [rec for _, rec in iter_jsonl(path)]


def read_header(path: str | Path) -> dict | None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first:
        return None
    rec = json.loads(first)
    return rec if isinstance(rec, dict) and rec.get("record") == "header" else None


# -- schemas --------------------------------------------------------------------

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_VERDICT = {
    "type": "object",
    "required": ["score", "pass"],
    "properties": {"score": _NUM_OR_NULL, "pass": {"type": "boolean"}},
}
_SLICE = {"oneOf": [{"type": "null"}, {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}]}

SCHEMAS: dict[str, dict] = {
    "ytsv-manifest/1": {
        "type": "object",
        "required": ["record", "video_id", "fps", "segments", "video_intensity", "kept"],
        "properties": {
            "record": {"const": "video"},
            "video_id": {"type": "string"},
            "fps": _NUM,
            "kept": {"type": "boolean"},
            "video_intensity": {
                "type": "object",
                "required": ["value", "pass"],
                "properties": {"value": _NUM_OR_NULL, "pass": {"type": "boolean"}},
            },
            "segments": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["index", "start_frame", "end_frame", "duration_s", "silent", "systems", "rules", "kept"],
                    "properties": {
                        "start_frame": {"type": "integer"},
                        "end_frame": {"type": "integer"},
                        "duration_s": _NUM,
                        "silent": {"type": "boolean"},
                        "kept": {"type": "boolean"},
                        "systems": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "required": ["index", "median", "mean", "box", "rules", "kept"],
                                "properties": {
                                    "box": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
                                    "rules": {
                                        "type": "object",
                                        "required": [
                                            "pixel_anomaly", "height_range", "height_lt_width",
                                            "height_anomaly", "overlap",
                                        ],
                                        "properties": {
                                            "pixel_anomaly": _VERDICT,
                                            "height_anomaly": _VERDICT,
                                            "overlap": _VERDICT,
                                            "height_range": {"type": "boolean"},
                                            "height_lt_width": {"type": "boolean"},
                                        },
                                    },
                                    "kept": {"type": "boolean"},
                                },
                            },
                        },
                    },
                },
            },
        },
    },
    "batch-manifest/1": {
        "type": "object",
        "required": ["step", "slot", "task", "sample_id", "src_path", "tgt_path", "src_slice", "tgt_slice"],
        "properties": {
            "step": {"type": "integer", "minimum": 0},
            "slot": {"type": "integer", "minimum": 0},
            "task": {"enum": ["OMR", "M2A", "I2A", "AMT", "L2I", "A2I"]},
            "sample_id": {"type": "string"},
            "src_path": {"type": ["string", "null"]},
            "tgt_path": {"type": ["string", "null"]},
            "src_slice": _SLICE,
            "tgt_slice": _SLICE,
        },
    },
    "token-index/1": {
        "type": "object",
        "required": ["id", "modality", "length", "path"],
        "properties": {
            "id": {"type": "string"},
            "modality": {"enum": ["IMAGE", "AUDIO", "NOTATION", "MIDI"]},
            "length": {"type": "integer", "minimum": 0},
            "path": {"type": "string"},
        },
    },
    "lmx/1": {
        "type": "object",
        "required": ["id", "lmx"],
        "properties": {"id": {"type": "string"}, "lmx": {"type": "string"}},
    },
    "events/1": {
        "type": "object",
        "required": ["id", "events"],
        "properties": {"id": {"type": "string"}, "events": {"type": "array", "items": {"type": "string"}}},
    },
    "notes/1": {
        "type": "object",
        "required": ["id", "notes"],
        "properties": {
            "id": {"type": "string"},
            "notes": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 4}},
        },
    },
    "eval-report/1": {
        "type": "object",
        "required": ["schema", "tool_version", "config_echo", "aggregate", "pairs"],
        "properties": {
            "aggregate": {
                "type": "object",
                "required": ["onset_f1", "ser", "emd_pitch", "emd_duration", "fad"],
                "properties": {
                    "onset_f1": {"type": ["object", "null"]},
                    "ser": _NUM_OR_NULL,
                    "emd_pitch": _NUM_OR_NULL,
                    "emd_duration": _NUM_OR_NULL,
                    "fad": _NUM_OR_NULL,
                },
            },
            "pairs": {"type": "array"},
        },
    },
}


def validate_record(record: dict, schema: str) -> None:
    try:
        spec = SCHEMAS[schema]
    except KeyError:
        raise ValueError(f"unknown schema {schema!r}") from None
    jsonschema.validate(record, spec)


def validate_file(path: str | Path) -> int:
    """Validate every record of a JSONL file against the schema named in its header."""
    head = read_header(path)
    if head is None:
        raise ValueError(f"{path}: missing header line")
    for key in ("tool_version", "config_echo"):
        if key not in head:
            raise ValueError(f"{path}: header lacks {key!r}")
    n = 0
    for lineno, rec in iter_jsonl(path):
        try:
            validate_record(rec, head["schema"])
        except jsonschema.ValidationError as exc:
            raise ValueError(f"{path}:{lineno}: {exc.message}") from None
        n += 1
    return n
