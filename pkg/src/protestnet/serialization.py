"""Byte-deterministic container for named float arrays plus a JSON header.

Layout::

    b"PNET" | u32 version | u64 header length | header JSON | raw array bytes

Arrays are stored as little-endian float64 in header order. ``np.savez``
is avoided because zip entries carry wall-clock timestamps.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PNET"
VERSION = 1


class FormatError(ValueError):
    pass


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_arrays(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = dumps_json({"meta": meta, "arrays": entries}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)


def load_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a protestnet container")
    version, hlen = struct.unpack_from("<IQ", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    off = 4 + struct.calcsize("<IQ")
    header = json.loads(raw[off:off + hlen])
    off += hlen
    arrays = {}
    for e in header["arrays"]:
        shape = tuple(e["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    if off != len(raw):
        raise FormatError(f"{path}: trailing or missing bytes")
    return header["meta"], arrays
