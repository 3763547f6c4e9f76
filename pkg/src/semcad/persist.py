"""Versioned container files: a JSON header followed by a float64 blob.

Layout (all integers little-endian)::

    8 bytes   magic b"SEMCAD\\x00\\x00"
    u32       format_version
    u32       reserved (0)
    u64       header length H in bytes
    H bytes   UTF-8 JSON header (sorted keys)
    ...       float64 little-endian array data, in header "arrays" order

Every array entry in the header records its ``name``, ``shape`` and element
``offset`` into the blob; arrays are stored C-contiguous (row-major).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MAGIC = b"SEMCAD\x00\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIIQ")


class FormatError(ValueError):
    pass


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)


def encode_container(kind: str, meta: Mapping, arrays: Sequence[tuple[str, np.ndarray]]) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        if not np.isfinite(a).all():
            raise FormatError(f"array {name!r} has non-finite values")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    header = dumps_json({"kind": kind, "meta": meta, "arrays": entries}).encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, 0, len(header)) + header + b"".join(chunks)


def decode_container(data: bytes, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < _PREFIX.size:
        raise FormatError("file too short for a container header")
    magic, version, _, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad magic: not a semcad container")
    if version != FORMAT_VERSION:
        raise FormatError(f"format_version {version} unsupported (expected {FORMAT_VERSION})")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise FormatError("file truncated inside the header")
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    if header.get("kind") != kind:
        raise FormatError(f"container holds {header.get('kind')!r}, expected {kind!r}")
    if (len(data) - start - hlen) % 8:
        raise FormatError("array blob is not a whole number of float64 values")
    blob = np.frombuffer(data, dtype="<f8", offset=start + hlen)
    arrays = {}
    for e in header["arrays"]:
        size = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + size > blob.size:
            raise FormatError(f"array {e['name']!r} runs past end of blob")
        arrays[e["name"]] = blob[e["offset"] : e["offset"] + size].reshape(e["shape"]).astype(np.float64)
    return header["meta"], arrays


def write_container(path, kind: str, meta: Mapping, arrays: Sequence[tuple[str, np.ndarray]]) -> None:
    Path(path).write_bytes(encode_container(kind, meta, arrays))


def read_container(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    return decode_container(Path(path).read_bytes(), kind)
