"""Versioned JSON checkpoint container.

A checkpoint maps section names ("generator", "policy", ...) to parameter
entries {name: {"shape": [...], "values": [...]}} plus a free-form meta
block. Serialization is canonical (sorted keys, fixed separators, repr
floats), so save -> load -> save round-trips byte-exactly and sections can
be compared as bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import Parameter

FORMAT_VERSION = 1


class FormatError(ValueError):
    """Checkpoint or vector file does not match the expected format."""


def section_from_params(params: list[Parameter]) -> dict:
    out = {}
    for p in params:
        if p.name in out:
            raise ValueError(f"duplicate parameter name {p.name}")
        out[p.name] = {"shape": list(p.value.shape), "values": p.value.reshape(-1).tolist()}
    return out


def canonical_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def section_bytes(params: list[Parameter]) -> bytes:
    return canonical_bytes(section_from_params(params))


def save(path: str | Path, sections: dict[str, list[Parameter]], meta: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "sections": {name: section_from_params(ps) for name, ps in sections.items()},
    }
    Path(path).write_bytes(canonical_bytes(doc))


def load(path: str | Path) -> tuple[dict[str, dict[str, np.ndarray]], dict]:
    """Returns ({section: {param_name: array}}, meta)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint format")
    sections = {}
    for name, entries in doc["sections"].items():
        arrays = {}
        for pname, entry in entries.items():
            arr = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
            arrays[pname] = arr
        sections[name] = arrays
    return sections, doc.get("meta", {})


def restore_params(params: list[Parameter], arrays: dict[str, np.ndarray]) -> None:
    """Copies stored arrays into existing parameters, matching by name."""
    for p in params:
        if p.name not in arrays:
            raise FormatError(f"checkpoint is missing parameter {p.name}")
        stored = arrays[p.name]
        if stored.shape != p.value.shape:
            raise FormatError(
                f"{p.name}: checkpoint shape {stored.shape} != model shape {p.value.shape}"
            )
        p.value[...] = stored
        p.zero_grad()
