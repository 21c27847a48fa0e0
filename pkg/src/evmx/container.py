"""Checkpoint container: magic, JSON header, raw float32 little-endian blobs.

Layout: 4-byte magic | u64 header length | UTF-8 JSON header | tensor data.
The header carries a config dict, ordered tensor descriptors (name, shape,
dtype), and free-form metadata; tensors follow in descriptor order as C-order
little-endian bytes.  Writing is canonical (sorted JSON keys, fixed order), so
identical state always produces identical bytes and files round-trip exactly.
"""

from __future__ import annotations

import json
import struct
import numpy as np

from .errors import BadMagic, ShapeMismatch, TruncatedRecord

_LEN = struct.Struct("<Q")

_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8"}


def write_container(magic: bytes, config: dict, tensors: dict[str, np.ndarray],
                    meta: dict | None = None) -> bytes:
    """Serialize named arrays with a config dict under a 4-byte magic."""
    if len(magic) != 4:
        raise ValueError(f"magic must be 4 bytes, got {magic!r}")
    descriptors = []
    blobs = []
    for name, arr in tensors.items():
        a = np.asarray(arr)
        code = {np.dtype(np.float32): "f4", np.dtype(np.float64): "f8",
                np.dtype(np.int64): "i8"}.get(a.dtype)
        if code is None:
            raise ShapeMismatch(f"tensor {name!r} has unsupported dtype {a.dtype}")
        descriptors.append({"name": name, "shape": list(a.shape), "dtype": code})
        blobs.append(np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes())
    header = json.dumps(
        {"config": config, "tensors": descriptors, "meta": meta or {}},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    return magic + _LEN.pack(len(header)) + header + b"".join(blobs)


def read_container(blob: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray], dict]:
    """Parse container bytes; returns (config, tensors in stored order, meta)."""
    if len(blob) < 4 or blob[:4] != magic:
        got = blob[:4] if len(blob) >= 4 else blob
        raise BadMagic(f"expected {magic!r}, got {got!r}")
    if len(blob) < 4 + _LEN.size:
        raise TruncatedRecord(f"container too short for header length ({len(blob)} bytes)")
    (header_len,) = _LEN.unpack_from(blob, 4)
    body_start = 4 + _LEN.size + header_len
    if len(blob) < body_start:
        raise TruncatedRecord(f"header needs {header_len} bytes, container has {len(blob)}")
    try:
        header = json.loads(blob[4 + _LEN.size : body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BadMagic(f"unreadable container header: {e}") from None
    config = header.get("config", {})
    meta = header.get("meta", {})
    tensors: dict[str, np.ndarray] = {}
    pos = body_start
    for desc in header.get("tensors", []):
        dtype = np.dtype(_DTYPES[desc["dtype"]])
        shape = tuple(desc["shape"])
        n_elems = int(np.prod(shape, dtype=np.int64))
        n_bytes = n_elems * dtype.itemsize
        if pos + n_bytes > len(blob):
            raise TruncatedRecord(
                f"tensor {desc['name']!r} needs {n_bytes} bytes at offset {pos}, file has {len(blob)}"
            )
        arr = np.frombuffer(blob, dtype=dtype, count=n_elems, offset=pos).reshape(shape)
        tensors[desc["name"]] = arr.copy()
        pos += n_bytes
    if pos != len(blob):
        raise TruncatedRecord(f"{len(blob) - pos} trailing bytes after tensor data")
    return config, tensors, meta


def save_container(path, magic: bytes, config: dict, tensors: dict[str, np.ndarray],
                   meta: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(write_container(magic, config, tensors, meta))


def load_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        return read_container(f.read(), magic)
