"""Parameter checkpoint files.

A checkpoint is a directory holding ``index.json`` plus one binary blob per
array.  The index maps each name to its shape and blob file; blobs are raw
little-endian float64 in C (row-major) order, so ``shape`` fully determines
the layout.  Byte-exact layout::

    index.json   {"format": "beatlearn-checkpoint", "version": 1,
                  "arrays": [{"name": ..., "shape": [...], "file": "a0000.bin",
                              "dtype": "<f8"}, ...]}
    a0000.bin    len == 8 * prod(shape) bytes, little-endian float64, C order

Non-trainable buffers (batch-norm running stats) are stored the same way as
parameters; names distinguish them.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT_NAME = "beatlearn-checkpoint"
FORMAT_VERSION = 1


def save_arrays(path, arrays: dict) -> None:
    """Write ``name -> ndarray`` to a checkpoint directory at ``path``.

    Files are written to temp names and renamed, so a reader never sees a
    half-written blob; the index is written last.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    index = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "arrays": []}
    for i, (name, values) in enumerate(arrays.items()):
        arr = np.asarray(values, dtype=np.float64)
        blob = f"a{i:04d}.bin"
        _atomic_write_bytes(out / blob, arr.astype("<f8").tobytes(order="C"))
        index["arrays"].append(
            {"name": name, "shape": list(arr.shape), "file": blob, "dtype": "<f8"})
    payload = json.dumps(index, indent=2, sort_keys=True) + "\n"
    _atomic_write_bytes(out / "index.json", payload.encode("utf-8"))


def load_arrays(path) -> dict:
    """Read a checkpoint directory back into ``name -> ndarray``."""
    root = Path(path)
    index_path = root / "index.json"
    if not index_path.is_file():
        raise CheckpointError(f"no index.json under {root}")
    try:
        index = json.loads(index_path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt index.json under {root}: {exc}") from exc
    if index.get("format") != FORMAT_NAME:
        raise CheckpointError(f"unrecognized checkpoint format {index.get('format')!r}")
    arrays = {}
    for entry in index["arrays"]:
        shape = tuple(entry["shape"])
        blob = root / entry["file"]
        if not blob.is_file():
            raise CheckpointError(f"missing blob {entry['file']} for {entry['name']!r}")
        raw = blob.read_bytes()
        expected = 8 * int(np.prod(shape, dtype=np.int64)) if shape else 8
        if len(raw) != expected:
            raise CheckpointError(
                f"blob {entry['file']} holds {len(raw)} bytes, expected {expected}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").astype(
            np.float64).reshape(shape)
    return arrays


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)
