"""Versioned, self-describing binary checkpoint container.

Layout: 8 magic bytes, a little-endian uint64 header length, a canonical
JSON header (sorted keys, compact separators), then the raw tensor payload.
Tensors are stored C-contiguous and little-endian — float64, int64, or
uint8 — at offsets recorded in the header, in sorted-name order, so that
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"HGCKPT01"
VERSION = 1

_DTYPE_TO_TAG = {
    np.dtype(np.float64): "f8",
    np.dtype(np.int64): "i8",
    np.dtype(np.uint8): "u1",
}
_TAG_TO_DTYPE = {"f8": "<f8", "i8": "<i8", "u1": "|u1"}


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype == np.bool_:
            arr = arr.astype(np.uint8)
        if arr.dtype not in _DTYPE_TO_TAG:
            raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        tag = _DTYPE_TO_TAG[arr.dtype]
        data = arr.astype(_TAG_TO_DTYPE[tag], copy=False).tobytes()
        entries.append(
            {"name": name, "dtype": tag, "shape": list(arr.shape), "offset": offset}
        )
        blobs.append(data)
        offset += len(data)
    header = {"version": VERSION, "meta": meta, "tensors": entries}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dtype = np.dtype(_TAG_TO_DTYPE[entry["dtype"]])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(
            payload, dtype=dtype, count=count, offset=start
        ).reshape(shape)
        tensors[entry["name"]] = arr.copy()
    return tensors, header["meta"]


def rng_state(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    name = state["bit_generator"]
    cls = getattr(np.random, name, None)
    if cls is None:
        raise ValueError(f"unknown bit generator {name!r}")
    gen = np.random.Generator(cls())
    gen.bit_generator.state = state
    return gen
