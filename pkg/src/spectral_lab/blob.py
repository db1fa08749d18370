"""Versioned binary container: magic, format version, JSON header, raw arrays.

Layout::

    b"SPLB" | u16 version | u32 header length | header (UTF-8 JSON) | arrays

Arrays are little-endian float64 in the order listed under ``header["arrays"]``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPLB"
FORMAT_VERSION = 1


class BlobFormatError(ValueError):
    pass


def write_blob(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(meta)
    header["kind"] = kind
    header["arrays"] = [
        {"name": name, "shape": list(np.shape(a))} for name, a in arrays.items()
    ]
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return path


def read_blob(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise BlobFormatError(f"{path}: not a spectral_lab blob")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != FORMAT_VERSION:
        raise BlobFormatError(f"{path}: unsupported format version {version}")
    header = json.loads(data[10 : 10 + hlen].decode("utf-8"))
    if kind is not None and header.get("kind") != kind:
        raise BlobFormatError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    offset = 10 + hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        buf = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[spec["name"]] = buf.reshape(shape).astype(float)
        offset += 8 * count
    if offset != len(data):
        raise BlobFormatError(f"{path}: trailing or missing bytes")
    return header, arrays
