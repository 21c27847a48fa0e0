"""Asynchronous event streams: domain types, validation, EVM1/CSV codecs, time slicing.

An event is the 4-tuple (x, y, t, p): pixel column, pixel row, timestamp in
microseconds, polarity (+1 brightness increase, -1 decrease).  Streams keep
their events in non-decreasing time order and never hold an event outside the
sensor geometry; both properties are enforced at construction, so every other
module can rely on them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import (
    BadMagic,
    EmptyStream,
    InvalidPolarity,
    InvalidWindow,
    MalformedLine,
    NonMonotonicTimestamp,
    OutOfBoundsEvent,
    TruncatedRecord,
)

EVM_MAGIC = b"EVM1"

# magic | u16 width | u16 height | u64 event count, little-endian
_EVM_HEADER = struct.Struct("<4sHHQ")
# u16 x | u16 y | u64 t | i8 p | 1 pad byte = 14 bytes per record
_EVM_RECORD = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "i1"), ("pad", "u1")])


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel array dimensions of an event sensor."""

    width: int
    height: int
    # naming tag only; two geometries with equal dimensions are the same sensor
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"geometry must be at least 1x1, got {self.width}x{self.height}")

    def __str__(self) -> str:
        return f"{self.width}x{self.height}" + (f" ({self.label})" if self.label else "")


DAVIS346 = SensorGeometry(346, 260, "davis346")
EVK4 = SensorGeometry(1280, 720, "evk4")


@dataclass(frozen=True)
class TimeWindow:
    """Half-open time interval [t_start, t_end) in microseconds."""

    t_start: int
    t_end: int

    def __post_init__(self):
        if self.t_start >= self.t_end:
            raise InvalidWindow(f"t_start={self.t_start} must be < t_end={self.t_end}")

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


class EventStream:
    """Immutable, validated sequence of events on a fixed sensor geometry.

    Events are stored as parallel int64 arrays (x, y, t, p); the arrays are
    marked read-only so streams can be shared freely across threads.
    """

    __slots__ = ("geometry", "x", "y", "t", "p")

    def __init__(self, geometry: SensorGeometry, x, y, t, p, *, validate: bool = True):
        self.geometry = geometry
        self.x = _as_readonly_i64(x)
        self.y = _as_readonly_i64(y)
        self.t = _as_readonly_i64(t)
        self.p = _as_readonly_i64(p)
        if validate:
            self._validate()

    def _validate(self) -> None:
        n = len(self.x)
        if not (len(self.y) == len(self.t) == len(self.p) == n):
            raise ValueError("event component arrays differ in length")
        if n == 0:
            return
        bad = ~np.isin(self.p, (-1, 1))
        if bad.any():
            i = int(np.argmax(bad))
            raise InvalidPolarity(f"event {i}: polarity {self.p[i]} not in {{-1, +1}}")
        oob = (
            (self.x < 0)
            | (self.x >= self.geometry.width)
            | (self.y < 0)
            | (self.y >= self.geometry.height)
        )
        if oob.any():
            i = int(np.argmax(oob))
            raise OutOfBoundsEvent(
                f"event {i}: ({self.x[i]}, {self.y[i]}) outside {self.geometry.width}x{self.geometry.height}"
            )
        if (self.t < 0).any():
            i = int(np.argmax(self.t < 0))
            raise NonMonotonicTimestamp(f"event {i}: negative timestamp {self.t[i]}")
        drops = np.diff(self.t) < 0
        if drops.any():
            i = int(np.argmax(drops)) + 1
            raise NonMonotonicTimestamp(
                f"event {i}: timestamp {self.t[i]} < previous {self.t[i - 1]}"
            )

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Iterable[tuple]) -> "EventStream":
        rows = list(events)
        if rows:
            arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), 4)
            return cls(geometry, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
        return cls.empty(geometry)

    @classmethod
    def empty(cls, geometry: SensorGeometry) -> "EventStream":
        z = np.empty(0, dtype=np.int64)
        return cls(geometry, z, z, z, z, validate=False)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    def __repr__(self) -> str:
        return f"EventStream({self.geometry}, {len(self)} events)"

    @property
    def t_first(self) -> int:
        if len(self) == 0:
            raise EmptyStream("stream has no events")
        return int(self.t[0])

    @property
    def t_last(self) -> int:
        if len(self) == 0:
            raise EmptyStream("stream has no events")
        return int(self.t[-1])

    def slice(self, window: TimeWindow) -> "EventStream":
        """Events with t_start <= t < t_end, order preserved.

        Binary search over the (sorted) timestamps: O(log N + K).
        """
        lo = int(np.searchsorted(self.t, window.t_start, side="left"))
        hi = int(np.searchsorted(self.t, window.t_end, side="left"))
        return EventStream(
            self.geometry, self.x[lo:hi], self.y[lo:hi], self.t[lo:hi], self.p[lo:hi],
            validate=False,
        )

    def time_sorted(self) -> tuple["EventStream", int]:
        """Stable-sorted copy by timestamp, plus the number of out-of-order events.

        Repair path for acquisition glitches; normal construction refuses
        unsorted input outright.
        """
        out_of_order = int(np.sum(np.diff(self.t) < 0))
        if out_of_order == 0:
            return self, 0
        order = np.argsort(self.t, kind="stable")
        return (
            EventStream(self.geometry, self.x[order], self.y[order], self.t[order], self.p[order]),
            out_of_order,
        )


def _as_readonly_i64(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("event components must be 1-D")
    arr.flags.writeable = False
    return arr


def parse_evm(blob: bytes, *, sort: bool = False) -> EventStream:
    """Decode an EVM1 blob into a validated stream.

    With ``sort=True`` out-of-order timestamps are repaired by a stable sort
    instead of raising NonMonotonicTimestamp.
    """
    if len(blob) < 4 or blob[:4] != EVM_MAGIC:
        if len(blob) >= 4:
            raise BadMagic(f"expected {EVM_MAGIC!r}, got {blob[:4]!r}")
        raise BadMagic(f"blob too short for magic ({len(blob)} bytes)")
    if len(blob) < _EVM_HEADER.size:
        raise TruncatedRecord(f"header needs {_EVM_HEADER.size} bytes, got {len(blob)}")
    _, width, height, count = _EVM_HEADER.unpack_from(blob)
    expected = _EVM_HEADER.size + count * _EVM_RECORD.itemsize
    if len(blob) != expected:
        raise TruncatedRecord(
            f"{count} records need {expected} bytes total, got {len(blob)}"
        )
    geometry = SensorGeometry(width, height)
    rec = np.frombuffer(blob, dtype=_EVM_RECORD, count=count, offset=_EVM_HEADER.size)
    t = rec["t"]
    if t.size and t.max() > np.iinfo(np.int64).max:
        raise TruncatedRecord("timestamp exceeds supported 63-bit range")
    stream = EventStream(
        geometry,
        rec["x"].astype(np.int64),
        rec["y"].astype(np.int64),
        t.astype(np.int64),
        rec["p"].astype(np.int64),
        validate=not sort,
    )
    if sort:
        stream = EventStream(stream.geometry, stream.x, stream.y, stream.t, stream.p,
                             validate=False)
        stream, _ = stream.time_sorted()
        stream._validate()
    return stream


def write_evm(stream: EventStream) -> bytes:
    """Serialize to EVM1; byte-for-byte deterministic, round-trips exactly."""
    header = _EVM_HEADER.pack(EVM_MAGIC, stream.geometry.width, stream.geometry.height,
                              len(stream))
    rec = np.zeros(len(stream), dtype=_EVM_RECORD)
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["t"] = stream.t
    rec["p"] = stream.p
    return header + rec.tobytes()


def load_evm(path, *, sort: bool = False) -> EventStream:
    with open(path, "rb") as f:
        return parse_evm(f.read(), sort=sort)


def save_evm(path, stream: EventStream) -> None:
    with open(path, "wb") as f:
        f.write(write_evm(stream))


def parse_csv(text, geometry: SensorGeometry, *, sort: bool = False) -> EventStream:
    """Parse `x,y,t,p` lines (optional header) into a validated stream.

    Polarity is accepted as {-1, +1} or {0, 1}; 0 maps to -1.  Blank lines are
    skipped; anything else that does not parse raises MalformedLine with its
    1-based line number.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    rows = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [f.strip() for f in line.split(",")]
        if len(parts) != 4:
            if line_no == 1 and _looks_like_header(parts):
                continue
            raise MalformedLine(line_no, f"expected 4 comma-separated fields, got {len(parts)}")
        try:
            x, y, t, p = (int(f) for f in parts)
        except ValueError:
            if line_no == 1 and _looks_like_header(parts):
                continue
            raise MalformedLine(line_no, f"non-integer field in {line!r}") from None
        if p == 0:
            p = -1
        elif p not in (-1, 1):
            raise MalformedLine(line_no, f"polarity {p} not in {{-1, 0, +1}}")
        rows.append((x, y, t, p))
    stream = EventStream.from_events(geometry, rows) if not sort else None
    if sort:
        arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), 4)
        raw_stream = EventStream(geometry, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                                 validate=False) if rows else EventStream.empty(geometry)
        raw_stream, _ = raw_stream.time_sorted()
        raw_stream._validate()
        return raw_stream
    return stream


def _looks_like_header(parts: list[str]) -> bool:
    for f in parts:
        try:
            int(f)
            return False
        except ValueError:
            continue
    return True
