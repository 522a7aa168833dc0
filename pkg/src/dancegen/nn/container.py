"""Named-array container used for checkpoints and feature files.

Layout (all integers little-endian)::

    b"DGNA" | u32 format version | u64 header length | JSON header | payload

The JSON header holds free-form metadata plus, per array, its name,
dtype, shape, byte offset into the payload and a CRC32 of its bytes.
Arrays are stored as raw little-endian values in insertion order.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..exceptions import CheckpointError

MAGIC = b"DGNA"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def write_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    index = []
    chunks = []
    offset = 0
    for name, a in arrays.items():
        a = np.asarray(a)
        le = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        index.append({
            "name": name,
            "dtype": le.dtype.str,
            "shape": list(a.shape),
            "offset": offset,
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "arrays": index}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)
    return path


def read_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a named-array container")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    payload = memoryview(data)[start + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        lo, n = entry["offset"], entry["nbytes"]
        raw = payload[lo:lo + n]
        if len(raw) != n or zlib.crc32(raw) != entry["crc32"]:
            raise CheckpointError(f"{path}: array {entry['name']!r} is truncated or corrupt")
        a = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arrays[entry["name"]] = a.astype(a.dtype.newbyteorder("="), copy=True)
    return arrays, header["meta"]
