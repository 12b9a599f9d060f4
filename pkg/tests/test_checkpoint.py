"""Byte format and round-trip behavior of parameter checkpoints."""

import json
import struct

import numpy as np
import pytest

from beatlearn.checkpoint import load_arrays, save_arrays
from beatlearn.errors import CheckpointError


def test_round_trip_preserves_values_and_shapes(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "stem.conv.weight": rng.normal(size=(8, 1, 15)),
        "stem.conv.bias": rng.normal(size=8),
        "head.dense.weight": rng.normal(size=(6, 32)),
    }
    save_arrays(tmp_path / "ckpt", arrays)
    loaded = load_arrays(tmp_path / "ckpt")
    assert set(loaded) == set(arrays)
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])


def test_blob_is_little_endian_float64_c_order(tmp_path):
    values = np.array([[1.5, -2.0], [3.25, 0.0]])
    save_arrays(tmp_path / "ckpt", {"w": values})
    index = json.loads((tmp_path / "ckpt" / "index.json").read_text())
    (entry,) = index["arrays"]
    assert entry == {"name": "w", "shape": [2, 2], "file": "a0000.bin", "dtype": "<f8"}
    raw = (tmp_path / "ckpt" / "a0000.bin").read_bytes()
    assert len(raw) == 32
    assert struct.unpack("<4d", raw) == (1.5, -2.0, 3.25, 0.0)


def test_missing_index_raises(tmp_path):
    with pytest.raises(CheckpointError):
        load_arrays(tmp_path / "nothing-here")


def test_truncated_blob_raises(tmp_path):
    save_arrays(tmp_path / "ckpt", {"w": np.zeros(4)})
    blob = tmp_path / "ckpt" / "a0000.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_arrays(tmp_path / "ckpt")


def test_rewrite_is_byte_identical(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([7.0])}
    save_arrays(tmp_path / "one", arrays)
    save_arrays(tmp_path / "two", arrays)
    for name in ("index.json", "a0000.bin", "a0001.bin"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
