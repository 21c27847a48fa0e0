"""Clip manifests, the 21-class action-unit taxonomy, LOOCV splits, synthetic clips.

The taxonomy is the fixed list of 21 facial/head action units below; a class
index is a position in that list.  Manifests are line-delimited key=value
records.  The synthetic generator renders a bright band sweeping across a dark
field and emits the events that motion would produce, one class per motion
pattern, so classifier and reconstruction training have a deterministic,
fully seeded stand-in for recorded data.
"""

from __future__ import annotations

import math
import os
import shlex
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    EmptyDataset,
    EvmxError,
    InvalidSpec,
    MalformedManifest,
    MissingFile,
    TooFewSubjects,
    UnknownAU,
)
from .events import EventStream, SensorGeometry, TimeWindow, load_evm, save_evm
from .representation import (
    CropSpec,
    FrameSequence,
    InputClip,
    accumulate,
    build_sequence,
    clip_to_input,
    load_evf,
    save_evf,
)
from . import pgm

# class index == position in this table
AU_TABLE: tuple[tuple[int, str], ...] = (
    (2, "Outer Brow Raiser"),
    (4, "Brow Lowerer"),
    (5, "Upper Lid Raiser"),
    (6, "Cheek Raiser"),
    (9, "Nose Wrinkler"),
    (12, "Lip Corner Puller"),
    (15, "Lip Corner Depressor"),
    (17, "Chin Raiser"),
    (23, "Lip Tightener"),
    (26, "Jaw Drop"),
    (41, "Lid Droop"),
    (43, "Eyes Closed"),
    (45, "Blink"),
    (51, "Head Turn Left"),
    (52, "Head Turn Right"),
    (53, "Head Up"),
    (54, "Head Down"),
    (61, "Eyes Turn Left"),
    (62, "Eyes Turn Right"),
    (63, "Eyes Up"),
    (64, "Eyes Down"),
)

N_CLASSES = len(AU_TABLE)

MODALITIES = frozenset(
    {"events-davis", "events-evk4", "rgb-webcam", "rgb-davis", "events-synthetic"}
)

LUX_MIN = 150
LUX_MAX = 1400


@dataclass(frozen=True)
class AULabel:
    class_index: int
    au_number: int
    description: str


TAXONOMY: tuple[AULabel, ...] = tuple(
    AULabel(i, au, desc) for i, (au, desc) in enumerate(AU_TABLE)
)
_BY_AU = {lbl.au_number: lbl for lbl in TAXONOMY}


def label_for_au(au_number: int) -> AULabel:
    try:
        return _BY_AU[au_number]
    except KeyError:
        raise UnknownAU(f"AU {au_number} is not one of the 21 recognized action units") from None


def label_for_class(class_index: int) -> AULabel:
    if not 0 <= class_index < N_CLASSES:
        raise UnknownAU(f"class index {class_index} outside 0..{N_CLASSES - 1}")
    return TAXONOMY[class_index]


def encode_target(class_index: int, n_classes: int = N_CLASSES) -> np.ndarray:
    """One-hot float32 vector with a single 1.0 at class_index."""
    if not 0 <= class_index < n_classes:
        raise UnknownAU(f"class index {class_index} outside 0..{n_classes - 1}")
    v = np.zeros(n_classes, dtype=np.float32)
    v[class_index] = 1.0
    return v


def decode_target(scores) -> int:
    """Index of the highest score; ties resolve to the lowest index."""
    arr = np.asarray(scores)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a non-empty 1-D score vector, got shape {arr.shape}")
    return int(np.argmax(arr))


@dataclass(frozen=True)
class ClipRecord:
    clip_path: str
    subject_id: str
    label: AULabel
    modality: str
    lux: int | None = None
    bbox: CropSpec | None = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise MalformedManifest(
                f"modality {self.modality!r} not in {sorted(MODALITIES)}"
            )
        if self.lux is not None and not LUX_MIN <= self.lux <= LUX_MAX:
            raise MalformedManifest(
                f"lux {self.lux} outside recorded range [{LUX_MIN}, {LUX_MAX}]"
            )


_REQUIRED_KEYS = ("clip", "subject", "au", "modality")
_OPTIONAL_KEYS = ("lux", "bbox")


def parse_manifest_line(line: str, line_no: int = 0) -> ClipRecord | None:
    """One `key=value ...` record; None for blank/comment lines."""
    fields = shlex.split(line, comments=True)
    if not fields:
        return None
    kv: dict[str, str] = {}
    for f in fields:
        if "=" not in f:
            raise MalformedManifest(f"line {line_no}: field {f!r} is not key=value")
        k, v = f.split("=", 1)
        if k not in _REQUIRED_KEYS and k not in _OPTIONAL_KEYS:
            raise MalformedManifest(f"line {line_no}: unknown key {k!r}")
        if k in kv:
            raise MalformedManifest(f"line {line_no}: duplicate key {k!r}")
        if not v:
            raise MalformedManifest(f"line {line_no}: empty value for {k!r}")
        kv[k] = v
    missing = [k for k in _REQUIRED_KEYS if k not in kv]
    if missing:
        raise MalformedManifest(f"line {line_no}: missing keys {missing}")
    try:
        au = int(kv["au"])
    except ValueError:
        raise MalformedManifest(f"line {line_no}: au={kv['au']!r} is not an integer") from None
    try:
        label = label_for_au(au)
    except UnknownAU as e:
        raise UnknownAU(f"line {line_no}: {e}") from None
    lux = None
    if "lux" in kv:
        try:
            lux = int(kv["lux"])
        except ValueError:
            raise MalformedManifest(f"line {line_no}: lux={kv['lux']!r} is not an integer") from None
    bbox = None
    if "bbox" in kv:
        parts = kv["bbox"].split(",")
        if len(parts) != 4:
            raise MalformedManifest(f"line {line_no}: bbox needs x,y,w,h, got {kv['bbox']!r}")
        try:
            x, y, w, h = (int(p) for p in parts)
            bbox = CropSpec(x, y, w, h)
        except (ValueError, EvmxError) as e:
            raise MalformedManifest(f"line {line_no}: bad bbox {kv['bbox']!r}: {e}") from None
    try:
        return ClipRecord(kv["clip"], kv["subject"], label, kv["modality"], lux, bbox)
    except MalformedManifest as e:
        raise MalformedManifest(f"line {line_no}: {e}") from None


def format_record(rec: ClipRecord) -> str:
    parts = [
        f"clip={shlex.quote(rec.clip_path)}",
        f"subject={shlex.quote(rec.subject_id)}",
        f"au={rec.label.au_number}",
        f"modality={rec.modality}",
    ]
    if rec.lux is not None:
        parts.append(f"lux={rec.lux}")
    if rec.bbox is not None:
        b = rec.bbox
        parts.append(f"bbox={b.x},{b.y},{b.w},{b.h}")
    return " ".join(parts)


def load_manifest(path, *, check_files: bool = True) -> list[ClipRecord]:
    """Parse a manifest; clip paths are resolved relative to the manifest's directory."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except FileNotFoundError:
        raise MissingFile(f"manifest not found: {path}") from None
    base = os.path.dirname(os.path.abspath(path))
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        rec = parse_manifest_line(line, line_no)
        if rec is None:
            continue
        if not os.path.isabs(rec.clip_path):
            rec = replace(rec, clip_path=os.path.join(base, rec.clip_path))
        if check_files and not os.path.exists(rec.clip_path):
            raise MissingFile(f"line {line_no}: clip file not found: {rec.clip_path}")
        records.append(rec)
    return records


def save_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(format_record(rec) + "\n")


@dataclass(frozen=True)
class Fold:
    test_subject: str
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]


@dataclass(frozen=True)
class LOOCVPlan:
    subjects: tuple[str, ...]
    folds: tuple[Fold, ...]


def split_loocv(records) -> LOOCVPlan:
    """One fold per subject, that subject held out; subjects in sorted order.

    Every clip of the held-out subject goes to the test side, everything else
    to the train side, so no subject ever appears on both sides of a fold.
    """
    records = list(records)
    subjects = sorted({r.subject_id for r in records})
    if len(subjects) < 2:
        raise TooFewSubjects(
            f"leave-one-out needs >= 2 subjects, found {len(subjects)}"
        )
    folds = []
    for s in subjects:
        test = tuple(i for i, r in enumerate(records) if r.subject_id == s)
        train = tuple(i for i, r in enumerate(records) if r.subject_id != s)
        folds.append(Fold(s, train, test))
    return LOOCVPlan(tuple(subjects), tuple(folds))


def load_inputs(
    records,
    *,
    slice_us: int = 33_000,
    crop: CropSpec | None = None,
    out_size: tuple[int, int] | None = None,
    encoding: str = "raw",
) -> list[InputClip]:
    """Read each record's EVM1 clip and run the frame pipeline on it.

    A record's own bbox takes precedence over the shared crop argument; the
    clip's label index rides along on the InputClip.
    """
    clips = []
    for rec in records:
        try:
            stream = load_evm(rec.clip_path)
        except FileNotFoundError:
            raise MissingFile(f"clip file not found: {rec.clip_path}") from None
        seq = build_sequence(stream, slice_us)
        clips.append(
            clip_to_input(
                seq,
                crop=rec.bbox if rec.bbox is not None else crop,
                out_size=out_size,
                encoding=encoding,
                label=rec.label.class_index,
                meta={"subject": rec.subject_id, "au": rec.label.au_number},
            )
        )
    return clips


# ---------------------------------------------------------------------------
# synthetic clips

@dataclass(frozen=True)
class MotionPattern:
    """kind 'translate' sweeps a band along angle_deg; 'blink' closes and
    reopens a lid from the top edge; 'static' renders a fixed band, no events."""

    kind: str
    angle_deg: float = 0.0


# motion patterns with a natural action-unit reading come first so small
# class counts get the most separable set
_PATTERN_ORDER: tuple[tuple[int, MotionPattern], ...] = (
    (51, MotionPattern("translate", 180.0)),  # head turn left: band sweeps -x
    (52, MotionPattern("translate", 0.0)),    # head turn right
    (53, MotionPattern("translate", 270.0)),  # head up: band sweeps -y
    (54, MotionPattern("translate", 90.0)),   # head down
    (45, MotionPattern("blink")),
    (43, MotionPattern("static")),
)


def default_classes(n_classes: int) -> tuple[tuple[AULabel, MotionPattern], ...]:
    """First n_classes (label, pattern) pairs; beyond the six named patterns,
    remaining action units get evenly spread sweep angles."""
    if not 2 <= n_classes <= N_CLASSES:
        raise InvalidSpec(f"n_classes must be in 2..{N_CLASSES}, got {n_classes}")
    out = [(label_for_au(au), pat) for au, pat in _PATTERN_ORDER[:n_classes]]
    if n_classes > len(_PATTERN_ORDER):
        used = {au for au, _ in _PATTERN_ORDER}
        rest = [lbl for lbl in TAXONOMY if lbl.au_number not in used]
        extra = n_classes - len(_PATTERN_ORDER)
        for i in range(extra):
            angle = 15.0 + i * (360.0 / len(rest))
            out.append((rest[i], MotionPattern("translate", angle)))
    return tuple(out)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a seeded synthetic dataset.

    event_rate is the (rounded) number of events emitted per pixel transition;
    noise_rate is uniform background noise in events per pixel per second.
    """

    n_classes: int = 4
    clips_per_class: int = 25
    n_subjects: int = 7
    geometry: SensorGeometry = SensorGeometry(64, 64)
    duration_us: int = 330_000
    slice_us: int = 33_000
    event_rate: float = 1.0
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.n_classes <= N_CLASSES:
            raise InvalidSpec(f"n_classes must be in 2..{N_CLASSES}, got {self.n_classes}")
        if self.clips_per_class < 1:
            raise InvalidSpec(f"clips_per_class must be >= 1, got {self.clips_per_class}")
        if self.n_subjects < 1:
            raise InvalidSpec(f"n_subjects must be >= 1, got {self.n_subjects}")
        if self.geometry.width < 16 or self.geometry.height < 16:
            raise InvalidSpec(f"geometry must be at least 16x16, got {self.geometry}")
        if self.duration_us < self.slice_us or self.slice_us < 1:
            raise InvalidSpec(
                f"need duration_us >= slice_us >= 1, got {self.duration_us}, {self.slice_us}"
            )
        if self.event_rate < 0 or self.noise_rate < 0:
            raise InvalidSpec("event_rate and noise_rate must be >= 0")

    @property
    def n_clips(self) -> int:
        return self.n_classes * self.clips_per_class

    @property
    def n_slices(self) -> int:
        return math.ceil(self.duration_us / self.slice_us)


@dataclass(frozen=True)
class SyntheticClip:
    """One generated clip: events, its taxonomy label, and rendered intensity
    frames at slice midpoints on the absolute grid [k*slice, (k+1)*slice)."""

    stream: EventStream
    label: AULabel
    train_index: int  # position in the spec's class list, 0..n_classes-1
    subject_id: str
    duration_us: int
    slice_us: int
    targets: np.ndarray  # (T, H, W) float32 in [0, 1]


_BG = 0.15
_FG = 0.85


def _projection(geometry: SensorGeometry, angle_deg: float):
    dx = math.cos(math.radians(angle_deg))
    dy = math.sin(math.radians(angle_deg))
    xs = np.arange(geometry.width, dtype=np.float64)
    ys = np.arange(geometry.height, dtype=np.float64)
    proj = dy * ys[:, None] + dx * xs[None, :]  # (H, W) pixel-center projections
    corners = [dx * x + dy * y for x in (0, geometry.width - 1) for y in (0, geometry.height - 1)]
    return proj, min(corners), max(corners)


def _translate_clip(spec: SyntheticSpec, pattern: MotionPattern, rng: np.random.Generator):
    """Band [a(t), a(t)+w] on the projection axis, a(t) = a0 + u*t, u > 0.

    Each pixel is covered exactly once: +1 when the leading edge reaches it,
    -1 when the trailing edge passes.  Closed form, no time stepping.
    """
    g = spec.geometry
    angle = pattern.angle_deg + float(rng.uniform(-8.0, 8.0))
    width = float(rng.integers(10, 17))
    margin_frac = float(rng.uniform(0.02, 0.08))
    proj, p_lo, p_hi = _projection(g, angle)
    span = p_hi - p_lo
    margin = margin_frac * span
    a0 = p_lo + margin
    a1 = p_hi - width - margin
    if a1 <= a0:  # geometry too small for band + margins; park the band mid-span
        a0 = a1 = p_lo + (span - width) / 2
    u = max(a1 - a0, 1e-9) / spec.duration_us

    flat = proj.ravel()
    t_on = (flat - width - a0) / u
    t_off = (flat - a0) / u
    ys, xs = np.divmod(np.arange(flat.size), g.width)

    def pick(times, polarity):
        m = (times >= 0) & (times < spec.duration_us)
        return xs[m], ys[m], np.rint(times[m]).astype(np.int64), np.full(m.sum(), polarity, np.int64)

    ex_on, ey_on, et_on, ep_on = pick(t_on, 1)
    ex_off, ey_off, et_off, ep_off = pick(t_off, -1)
    events = (
        np.concatenate([ex_on, ex_off]),
        np.concatenate([ey_on, ey_off]),
        np.concatenate([et_on, et_off]),
        np.concatenate([ep_on, ep_off]),
    )

    def render(t_us: float) -> np.ndarray:
        a = a0 + u * t_us
        cover = np.clip(np.minimum(proj + 0.5, a + width) - np.maximum(proj - 0.5, a), 0.0, 1.0)
        return (_BG + (_FG - _BG) * cover).astype(np.float32)

    return events, render


def _blink_clip(spec: SyntheticSpec, rng: np.random.Generator):
    """Lid descends from the top edge to l_max then retracts, triangular in time."""
    g = spec.geometry
    l_max = float(rng.integers(g.height * 5 // 8, g.height * 7 // 8))
    d = float(spec.duration_us)
    ys = np.arange(g.height, dtype=np.float64)
    rows = ys[ys < l_max]
    t_on = rows * d / (2.0 * l_max)          # lid reaches row on the way down
    t_off = d * (1.0 - rows / (2.0 * l_max))  # lid clears row on the way up

    def emit(times, pol):
        m = (times >= 0) & (times < d)
        rr = rows[m].astype(np.int64)
        tt = np.rint(times[m]).astype(np.int64)
        n = rr.size
        return (
            np.tile(np.arange(g.width, dtype=np.int64), n),
            np.repeat(rr, g.width),
            np.repeat(tt, g.width),
            np.full(n * g.width, pol, np.int64),
        )

    on = emit(t_on, 1)
    off = emit(t_off, -1)
    events = tuple(np.concatenate([a, b]) for a, b in zip(on, off))

    def render(t_us: float) -> np.ndarray:
        frac_t = t_us / d
        lid = l_max * (1.0 - abs(2.0 * frac_t - 1.0))
        cover = np.clip(lid - ys + 0.5, 0.0, 1.0)
        img = _BG + (_FG - _BG) * cover
        return np.repeat(img[:, None], g.width, axis=1).astype(np.float32)

    return events, render


def _static_clip(spec: SyntheticSpec, rng: np.random.Generator):
    """Fixed horizontal band, no motion events."""
    g = spec.geometry
    width = float(rng.integers(10, 17))
    proj, p_lo, p_hi = _projection(g, 90.0)
    a0 = p_lo + (p_hi - p_lo - width) / 2
    z = np.empty(0, np.int64)

    def render(t_us: float) -> np.ndarray:
        cover = np.clip(np.minimum(proj + 0.5, a0 + width) - np.maximum(proj - 0.5, a0), 0.0, 1.0)
        return (_BG + (_FG - _BG) * cover).astype(np.float32)

    return (z, z, z, z), render


def _one_clip(spec: SyntheticSpec, pattern: MotionPattern, clip_index: int):
    rng = np.random.default_rng([spec.seed, clip_index])
    if pattern.kind == "translate":
        events, render = _translate_clip(spec, pattern, rng)
    elif pattern.kind == "blink":
        events, render = _blink_clip(spec, rng)
    elif pattern.kind == "static":
        events, render = _static_clip(spec, rng)
    else:
        raise InvalidSpec(f"unknown motion pattern kind {pattern.kind!r}")
    x, y, t, p = events

    copies = int(round(spec.event_rate))
    if copies != 1:
        x, y, t, p = (np.repeat(a, copies) for a in (x, y, t, p))

    if spec.noise_rate > 0:
        g = spec.geometry
        lam = spec.noise_rate * g.width * g.height * (spec.duration_us / 1e6)
        n = int(rng.poisson(lam))
        x = np.concatenate([x, rng.integers(0, g.width, n)])
        y = np.concatenate([y, rng.integers(0, g.height, n)])
        t = np.concatenate([t, rng.integers(0, spec.duration_us, n)])
        p = np.concatenate([p, rng.integers(0, 2, n) * 2 - 1])

    order = np.argsort(t, kind="stable")
    stream = EventStream(spec.geometry, x[order], y[order], t[order], p[order])

    mids = [(k + 0.5) * spec.slice_us for k in range(spec.n_slices)]
    targets = np.stack([render(min(m, spec.duration_us - 1.0)) for m in mids])
    return stream, targets.astype(np.float32)


def generate_synthetic(spec: SyntheticSpec) -> list[SyntheticClip]:
    """All clips for the spec, class-major order, subjects assigned round-robin.

    Per-clip randomness is derived from (seed, global clip index), so any
    subset regenerates identically and the whole dataset is reproducible
    byte for byte.
    """
    classes = default_classes(spec.n_classes)
    clips = []
    for ci, (label, pattern) in enumerate(classes):
        for j in range(spec.clips_per_class):
            g_idx = ci * spec.clips_per_class + j
            subject = f"s{(g_idx % spec.n_subjects) + 1:02d}"
            stream, targets = _one_clip(spec, pattern, g_idx)
            clips.append(
                SyntheticClip(
                    stream=stream,
                    label=label,
                    train_index=ci,
                    subject_id=subject,
                    duration_us=spec.duration_us,
                    slice_us=spec.slice_us,
                    targets=targets,
                )
            )
    return clips


def condition_frames(clip: SyntheticClip) -> FrameSequence:
    """Event-count frames on the same absolute grid as the clip's targets."""
    t = clip.targets.shape[0]
    frames = np.stack([
        accumulate(clip.stream, TimeWindow(k * clip.slice_us, (k + 1) * clip.slice_us))
        for k in range(t)
    ])
    return FrameSequence(frames.astype(np.float32), 0, clip.slice_us)


def synthetic_inputs(clips, *, encoding: str = "raw") -> list[InputClip]:
    """Network-ready inputs on the absolute grid, labeled with train_index."""
    out = []
    for c in clips:
        seq = condition_frames(c)
        out.append(clip_to_input(seq, encoding=encoding, label=c.train_index,
                                 meta={"subject": c.subject_id, "au": c.label.au_number}))
    return out


def write_synthetic_dataset(out_dir, spec: SyntheticSpec) -> tuple[str, str]:
    """Materialize a synthetic dataset on disk.

    Writes EVM1 clips plus clips.txt, and per-slice (EVF1 condition, PGM
    target) pairs plus pairs.txt.  Returns (clip manifest path, pair manifest
    path).
    """
    clips = generate_synthetic(spec)
    clip_dir = os.path.join(out_dir, "clips")
    pair_dir = os.path.join(out_dir, "pairs")
    os.makedirs(clip_dir, exist_ok=True)
    os.makedirs(pair_dir, exist_ok=True)

    records = []
    pair_lines = []
    for g_idx, clip in enumerate(clips):
        name = f"clip_{g_idx:04d}.evm"
        save_evm(os.path.join(clip_dir, name), clip.stream)
        records.append(
            ClipRecord(
                clip_path=os.path.join("clips", name),
                subject_id=clip.subject_id,
                label=clip.label,
                modality="events-synthetic",
            )
        )
        cond = condition_frames(clip)
        for k in range(len(cond)):
            cond_name = f"cond_{g_idx:04d}_{k:02d}.evf"
            tgt_name = f"tgt_{g_idx:04d}_{k:02d}.pgm"
            one = FrameSequence(cond.data[k : k + 1], cond.t_origin + k * clip.slice_us,
                                clip.slice_us)
            save_evf(os.path.join(pair_dir, cond_name), one)
            pgm.save_pgm(os.path.join(pair_dir, tgt_name), clip.targets[k])
            pair_lines.append(f"pairs/{cond_name},pairs/{tgt_name}")

    manifest_path = os.path.join(out_dir, "clips.txt")
    save_manifest(manifest_path, records)
    pairs_path = os.path.join(out_dir, "pairs.txt")
    with open(pairs_path, "w", encoding="utf-8") as f:
        f.write("\n".join(pair_lines) + "\n")
    return manifest_path, pairs_path


def load_pairs(manifest_path) -> tuple[np.ndarray, np.ndarray]:
    """Read `condition_path,target_path` lines into aligned arrays.

    Returns (conditions (N, 2, H, W) float32, targets (N, H, W) float32);
    paths resolve relative to the manifest's directory.
    """
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except FileNotFoundError:
        raise MissingFile(f"pair manifest not found: {manifest_path}") from None
    base = os.path.dirname(os.path.abspath(manifest_path))
    conds, tgts = [], []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedManifest(
                f"line {line_no}: expected condition_path,target_path, got {line!r}"
            )
        cond_path, tgt_path = (
            p if os.path.isabs(p) else os.path.join(base, p) for p in parts
        )
        for p in (cond_path, tgt_path):
            if not os.path.exists(p):
                raise MissingFile(f"line {line_no}: file not found: {p}")
        seq = load_evf(cond_path)
        if len(seq) != 1:
            raise MalformedManifest(
                f"line {line_no}: condition file holds {len(seq)} frames, expected 1"
            )
        conds.append(seq.data[0])
        tgts.append(pgm.load_pgm(tgt_path))
    if not conds:
        raise EmptyDataset(f"no pairs in {manifest_path}")
    return np.stack(conds).astype(np.float32), np.stack(tgts).astype(np.float32)
