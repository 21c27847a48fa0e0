"""Dense two-channel event frames: accumulation, slicing, crop/resize, encodings.

A stream is turned into a sequence of frames by cutting it into fixed-duration
half-open windows anchored at the first event.  Each frame is a (2, H, W)
float32 count image: channel 0 counts +1 events, channel 1 counts -1 events.
Every event in the covered span lands in exactly one frame, so channel sums
are conserved; that invariant is what the tests pin down.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, BoxOutOfBounds, EmptyStream, ShapeMismatch, TruncatedRecord
from .events import EventStream, SensorGeometry, TimeWindow

EVF_MAGIC = b"EVF1"

# magic | u32 T | u32 C | u32 H | u32 W, little-endian; float32 data follows
_EVF_HEADER = struct.Struct("<4sIIII")

ENCODINGS = ("raw", "binary", "unit-max")


@dataclass(frozen=True)
class CropSpec:
    """Axis-aligned pixel box: left column, top row, width, height."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise BoxOutOfBounds(f"crop must be at least 1x1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise BoxOutOfBounds(f"crop origin ({self.x}, {self.y}) is negative")

    @classmethod
    def full_frame(cls, geometry: SensorGeometry) -> "CropSpec":
        return cls(0, 0, geometry.width, geometry.height)

    def check_within(self, height: int, width: int) -> None:
        if self.x + self.w > width or self.y + self.h > height:
            raise BoxOutOfBounds(
                f"crop {self.x},{self.y},{self.w},{self.h} exceeds {width}x{height} frame"
            )


@dataclass(frozen=True)
class EventFrame:
    """Counts for one time window; counts[0] is +1 events, counts[1] is -1."""

    counts: np.ndarray
    window: TimeWindow

    def __post_init__(self):
        c = self.counts
        if c.ndim != 3 or c.shape[0] != 2:
            raise ShapeMismatch(f"frame must be (2, H, W), got {c.shape}")

    @property
    def height(self) -> int:
        return self.counts.shape[1]

    @property
    def width(self) -> int:
        return self.counts.shape[2]


@dataclass(frozen=True)
class FrameSequence:
    """(T, 2, H, W) float32 frames on a uniform time grid.

    Frame k covers [t_origin + k*slice_duration_us, t_origin + (k+1)*slice_duration_us).
    """

    data: np.ndarray
    t_origin: int
    slice_duration_us: int

    def __post_init__(self):
        d = self.data
        if d.ndim != 4 or d.shape[1] != 2:
            raise ShapeMismatch(f"sequence must be (T, 2, H, W), got {d.shape}")
        if d.dtype != np.float32:
            raise ShapeMismatch(f"sequence must be float32, got {d.dtype}")
        if self.slice_duration_us < 1:
            raise ValueError(f"slice_duration_us must be >= 1 us, got {self.slice_duration_us}")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    def window(self, k: int) -> TimeWindow:
        if not 0 <= k < len(self):
            raise IndexError(f"frame {k} out of range for {len(self)}-frame sequence")
        start = self.t_origin + k * self.slice_duration_us
        return TimeWindow(start, start + self.slice_duration_us)

    def frame(self, k: int) -> EventFrame:
        return EventFrame(self.data[k], self.window(k))


@dataclass(frozen=True)
class InputClip:
    """Network-ready clip: (T, 2, H, W) float32 plus an integer class label.

    label is -1 when unknown (inference inputs, unlabeled data).
    """

    data: np.ndarray
    label: int = -1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.data
        if d.ndim != 4 or d.shape[1] != 2:
            raise ShapeMismatch(f"clip must be (T, 2, H, W), got {d.shape}")
        if d.dtype != np.float32:
            raise ShapeMismatch(f"clip must be float32, got {d.dtype}")

    def __len__(self) -> int:
        return self.data.shape[0]


def accumulate(stream: EventStream, window: TimeWindow) -> np.ndarray:
    """Count events per pixel and polarity within [t_start, t_end).

    Returns (2, H, W) float32.  One bincount over flattened
    (channel, row, col) indices: O(K) in the window's event count.
    """
    h, w = stream.geometry.height, stream.geometry.width
    part = stream.slice(window)
    if len(part) == 0:
        return np.zeros((2, h, w), dtype=np.float32)
    channel = (part.p < 0).astype(np.int64)  # +1 -> 0, -1 -> 1
    flat = (channel * h + part.y) * w + part.x
    counts = np.bincount(flat, minlength=2 * h * w)
    return counts.reshape(2, h, w).astype(np.float32)


def build_sequence(stream: EventStream, slice_duration_us: int = 33_000) -> FrameSequence:
    """Cut a stream into consecutive fixed-duration frames anchored at its first event.

    T = ceil((t_last - t_first + 1) / slice_duration_us) so the final event falls
    inside the last half-open window.  Raises EmptyStream for empty input: an
    empty stream has no anchor time.
    """
    if len(stream) == 0:
        raise EmptyStream("cannot build frames from an empty stream")
    if slice_duration_us < 1:
        raise ValueError(f"slice_duration_us must be >= 1, got {slice_duration_us}")
    t0 = stream.t_first
    span = stream.t_last - t0 + 1
    n_frames = math.ceil(span / slice_duration_us)
    h, w = stream.geometry.height, stream.geometry.width
    data = np.zeros((n_frames, 2, h, w), dtype=np.float32)
    # one pass: bucket every event by (frame, channel, row, col)
    frame_idx = (stream.t - t0) // slice_duration_us
    channel = (stream.p < 0).astype(np.int64)
    flat = ((frame_idx * 2 + channel) * h + stream.y) * w + stream.x
    counts = np.bincount(flat, minlength=n_frames * 2 * h * w)
    data[:] = counts.reshape(n_frames, 2, h, w).astype(np.float32)
    return FrameSequence(data, t0, slice_duration_us)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the last two axes with bilinear interpolation.

    Sample positions use half-pixel centers, src = (dst + 0.5) * scale - 0.5,
    clamped to the source rectangle; a constant image stays constant and a
    same-size resize is the identity.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be at least 1x1, got {out_h}x{out_w}")
    src_h, src_w = img.shape[-2], img.shape[-1]
    if (out_h, out_w) == (src_h, src_w):
        return np.array(img, dtype=np.float32, copy=True)

    row_pos = (np.arange(out_h, dtype=np.float64) + 0.5) * (src_h / out_h) - 0.5
    col_pos = (np.arange(out_w, dtype=np.float64) + 0.5) * (src_w / out_w) - 0.5
    row_pos = np.clip(row_pos, 0.0, src_h - 1.0)
    col_pos = np.clip(col_pos, 0.0, src_w - 1.0)

    r0 = np.floor(row_pos).astype(np.int64)
    c0 = np.floor(col_pos).astype(np.int64)
    r1 = np.minimum(r0 + 1, src_h - 1)
    c1 = np.minimum(c0 + 1, src_w - 1)
    wr = (row_pos - r0).astype(np.float32)
    wc = (col_pos - c0).astype(np.float32)

    src = np.asarray(img, dtype=np.float32)
    top = src[..., r0, :][..., :, c0] * (1 - wc) + src[..., r0, :][..., :, c1] * wc
    bot = src[..., r1, :][..., :, c0] * (1 - wc) + src[..., r1, :][..., :, c1] * wc
    return (top * (1 - wr)[:, None] + bot * wr[:, None]).astype(np.float32)


def crop_resize(seq: FrameSequence, crop: CropSpec, out_size: tuple[int, int]) -> FrameSequence:
    """Crop every frame to `crop` and resize the result to out_size (h, w)."""
    crop.check_within(seq.height, seq.width)
    out_h, out_w = out_size
    window = seq.data[:, :, crop.y : crop.y + crop.h, crop.x : crop.x + crop.w]
    resized = bilinear_resize(window, out_h, out_w)
    return FrameSequence(resized, seq.t_origin, seq.slice_duration_us)


def encode_counts(data: np.ndarray, mode: str = "raw") -> np.ndarray:
    """Map raw per-pixel counts to network input values.

    raw: counts unchanged.  binary: 1.0 where any event fired.  unit-max:
    counts divided by the maximum over the whole array (zeros stay zeros).
    """
    if mode == "raw":
        return np.array(data, dtype=np.float32, copy=True)
    if mode == "binary":
        return (np.asarray(data) > 0).astype(np.float32)
    if mode == "unit-max":
        arr = np.asarray(data, dtype=np.float32)
        peak = float(arr.max()) if arr.size else 0.0
        if peak <= 0.0:
            return np.zeros_like(arr)
        return arr / peak
    raise ValueError(f"unknown encoding {mode!r}, expected one of {ENCODINGS}")


def clip_to_input(
    seq: FrameSequence,
    *,
    crop: CropSpec | None = None,
    out_size: tuple[int, int] | None = None,
    encoding: str = "raw",
    label: int = -1,
    meta: dict | None = None,
) -> InputClip:
    """Full preprocessing chain: optional crop/resize, then count encoding."""
    if crop is not None:
        target = out_size if out_size is not None else (crop.h, crop.w)
        seq = crop_resize(seq, crop, target)
    elif out_size is not None and out_size != (seq.height, seq.width):
        seq = FrameSequence(
            bilinear_resize(seq.data, out_size[0], out_size[1]),
            seq.t_origin,
            seq.slice_duration_us,
        )
    data = encode_counts(seq.data, encoding)
    return InputClip(data, label=label, meta=dict(meta or {}))


def write_evf(seq: FrameSequence) -> bytes:
    """Serialize frames to EVF1: 20-byte header then C-order float32 little-endian.

    The file carries only the array; the time grid (t_origin, slice_duration_us)
    is not stored, so a reader that needs windows must supply it.
    """
    t, c, h, w = seq.data.shape
    header = _EVF_HEADER.pack(EVF_MAGIC, t, c, h, w)
    return header + np.ascontiguousarray(seq.data, dtype="<f4").tobytes()


def read_evf(blob: bytes, *, t_origin: int = 0, slice_duration_us: int = 33_000) -> FrameSequence:
    if len(blob) < 4 or blob[:4] != EVF_MAGIC:
        if len(blob) >= 4:
            raise BadMagic(f"expected {EVF_MAGIC!r}, got {blob[:4]!r}")
        raise BadMagic(f"blob too short for magic ({len(blob)} bytes)")
    if len(blob) < _EVF_HEADER.size:
        raise TruncatedRecord(f"header needs {_EVF_HEADER.size} bytes, got {len(blob)}")
    _, t, c, h, w = _EVF_HEADER.unpack_from(blob)
    if c != 2:
        raise ShapeMismatch(f"frame files carry 2 channels, got {c}")
    expected = _EVF_HEADER.size + t * c * h * w * 4
    if len(blob) != expected:
        raise TruncatedRecord(f"(T,C,H,W)=({t},{c},{h},{w}) needs {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_EVF_HEADER.size).reshape(t, c, h, w)
    return FrameSequence(data.astype(np.float32), t_origin, slice_duration_us)


def save_evf(path, seq: FrameSequence) -> None:
    with open(path, "wb") as f:
        f.write(write_evf(seq))


def load_evf(path) -> FrameSequence:
    with open(path, "rb") as f:
        return read_evf(f.read())
