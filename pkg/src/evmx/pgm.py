"""Binary PGM (P5) images, 8-bit grayscale, mapped to and from floats in [0, 1]."""

from __future__ import annotations

import numpy as np

from .errors import BadMagic, ShapeMismatch, TruncatedRecord


def encode_pgm(img: np.ndarray) -> bytes:
    """Quantize a 2-D float image in [0, 1] to 8-bit P5 bytes."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"PGM images are 2-D, got {arr.ndim}-D")
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def decode_pgm(blob: bytes) -> np.ndarray:
    """Parse P5 bytes to a float32 image in [0, 1] (value / maxval)."""
    if blob[:2] != b"P5":
        raise BadMagic(f"expected P5, got {blob[:2]!r}")
    fields = []
    pos = 2
    # header = 3 whitespace-separated integers, # comments allowed
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(blob):
            raise TruncatedRecord("PGM header ended early")
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        token = blob[start:pos]
        try:
            fields.append(int(token))
        except ValueError:
            raise BadMagic(f"non-numeric PGM header token {token!r}") from None
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if not 0 < maxval < 256:
        raise BadMagic(f"only 8-bit PGM supported, maxval={maxval}")
    data = blob[pos : pos + w * h]
    if len(data) != w * h:
        raise TruncatedRecord(f"PGM body needs {w * h} bytes, got {len(data)}")
    img = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
    return (img.astype(np.float32) / float(maxval)).astype(np.float32)


def save_pgm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(img))


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_pgm(f.read())
