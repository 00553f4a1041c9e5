"""Run manifests and atomic, reproducible file output.

Every report embeds a manifest describing the command, its resolved
configuration, the seed, and the input files (sha256 digest, size, mtime).
Nothing in a manifest depends on the wall clock, so re-running a command on
unchanged inputs produces byte-identical outputs.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import InputError

TOOL_NAME = "cobra"


def _tool_version() -> str:
    from . import __version__

    return __version__


def file_digest(path: Path | str) -> dict[str, Any]:
    """sha256, byte size, and mtime (ns) of one input file."""
    path = Path(path)
    try:
        data = path.read_bytes()
        stat = path.stat()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return {
        "path": str(path),
        "sha256": hashlib.sha256(data).hexdigest(),
        "bytes": len(data),
        "mtime_ns": stat.st_mtime_ns,
    }


def build_manifest(
    command: str,
    config: Mapping[str, Any],
    inputs: Iterable[Path | str],
    seed: int | None,
) -> dict[str, Any]:
    return {
        "tool": TOOL_NAME,
        "version": _tool_version(),
        "command": command,
        "config": to_jsonable(dict(config)),
        "seed": seed,
        "inputs": [file_digest(p) for p in inputs],
    }


def to_jsonable(obj: Any) -> Any:
    """Recursively convert dataclasses, enums, and numpy types for JSON."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
        }
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (frozenset, set)):
        return sorted(to_jsonable(v) for v in obj)
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path | str, obj: Any) -> None:
    """Atomic JSON write with sorted keys; floats keep full precision."""
    path = Path(path)
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
