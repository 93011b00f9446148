"""Self-describing checkpoint container.

Layout: one version byte, then a 4-byte little-endian JSON header length,
the UTF-8 JSON header, and the concatenated raw parameter payloads
(little-endian scalars, C order). The header maps parameter name ->
(shape, dtype, offset) and carries the model config hash and global step.
Readers reject unknown versions.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

VERSION = 1


class CheckpointError(RuntimeError):
    pass


def config_hash(config) -> str:
    """Stable hash of a JSON-serializable config object."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, arrays: dict[str, np.ndarray], *, config=None, step: int = 0) -> None:
    entries = {}
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        entries[name] = {"shape": list(arr.shape), "dtype": str(arr.dtype), "offset": offset}
        payloads.append(raw)
        offset += len(raw)
    header = {
        "config_hash": config_hash(config) if config is not None else None,
        "config": config,
        "step": step,
        "params": entries,
    }
    header_bytes = json.dumps(header).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (name -> array, header dict)."""
    with open(path, "rb") as fh:
        version = struct.unpack("<B", fh.read(1))[0]
        if version != VERSION:
            raise CheckpointError(f"unknown checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        body = fh.read()
    arrays = {}
    for name, meta in header["params"].items():
        dtype = np.dtype(meta["dtype"]).newbyteorder("<")
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=start)
        arrays[name] = arr.reshape(shape).astype(np.dtype(meta["dtype"]))
    return arrays, header
