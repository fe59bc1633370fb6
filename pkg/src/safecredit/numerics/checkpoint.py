"""Versioned parameter checkpoints that round-trip bit-exactly.

A checkpoint is a single ``.npz`` archive holding the parameter arrays
(float64 binary, hence exact), optional optimizer-state arrays, and a JSON
metadata record (format version, model tags, hyperparameters).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    """Write named float64 arrays plus a JSON metadata blob."""
    payload = {}
    for key, value in arrays.items():
        payload[f"arr/{key}"] = np.asarray(value, dtype=np.float64)
    header = {"format_version": FORMAT_VERSION, "meta": meta or {}}
    payload["__header__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Read back ``(arrays, meta)``; raises on unknown format versions."""
    with np.load(Path(path)) as archive:
        header = json.loads(bytes(archive["__header__"]).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {header.get('format_version')}")
        arrays = {key[len("arr/"):]: archive[key]
                  for key in archive.files if key.startswith("arr/")}
    return arrays, header["meta"]
