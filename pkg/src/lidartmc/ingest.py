"""Detection-log parsing, multi-sensor merge, and NED conversion.

Wire format: JSON lines, one frame per line, plain or gzip-compressed:

    {"t": 1710968460.25, "frame_id": "L1",
     "detections": [{"x": 3.1, "y": -12.0, "z": 0.8,
                     "l": 4.6, "w": 1.9, "h": 1.5,
                     "yaw": 0.12, "score": 0.87}, ...]}

``score`` is optional. Box dimensions are meters, ``yaw`` is radians and
is wrapped into (-pi, pi] on parse. Malformed lines are skipped and
collected by default (field loggers are routinely dirty); ``strict=True``
aborts on the first bad line.
"""

from __future__ import annotations

import gzip
import io
import json
import logging
import math
from dataclasses import dataclass, replace
from heapq import merge as heap_merge
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidFieldError, MalformedLineError, OutOfOrderError
from .geo import FrameRegistry, wrap_angle

log = logging.getLogger(__name__)

MAX_DIMENSION_M = 50.0
DEFAULT_REORDER_WINDOW_S = 1.0

FRAME_SENSOR = "sensor"
FRAME_NED = "ned"


@dataclass(frozen=True)
class DetectionRecord:
    """One 3D bounding box. Coordinates are in the owning frame's system."""

    x: float
    y: float
    z: float
    length: float
    width: float
    height: float
    heading: float
    score: float | None = None

    def __post_init__(self):
        for name in ("x", "y", "z", "length", "width", "height", "heading"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be finite, got {v!r}")
        for name in ("length", "width", "height"):
            v = getattr(self, name)
            if not 0.0 < v < MAX_DIMENSION_M:
                raise ValueError(f"{name} must be in (0, {MAX_DIMENSION_M}), got {v}")
        if not -math.pi < self.heading <= math.pi:
            raise ValueError(f"heading {self.heading} outside (-pi, pi]")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Frame:
    """All detections from one sensor at one timestamp."""

    frame_id: str
    t: float
    detections: tuple[DetectionRecord, ...]


@dataclass(frozen=True)
class MergedStream:
    """Time-ordered frames, possibly interleaving several sensors."""

    frames: tuple[Frame, ...]
    coordinate_frame: str = FRAME_SENSOR

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)


_REQUIRED_DET_KEYS = ("x", "y", "z", "l", "w", "h", "yaw")


def _detection_from_obj(obj, line_no: int) -> DetectionRecord:
    if not isinstance(obj, dict):
        raise MalformedLineError(line_no, f"detection must be an object, got {obj!r}")
    missing = [k for k in _REQUIRED_DET_KEYS if k not in obj]
    if missing:
        raise MalformedLineError(line_no, f"detection missing keys {missing}")
    try:
        values = {k: float(obj[k]) for k in _REQUIRED_DET_KEYS}
        score = None if obj.get("score") is None else float(obj["score"])
    except (TypeError, ValueError) as exc:
        raise InvalidFieldError(line_no, f"non-numeric detection field: {exc}") from None
    try:
        return DetectionRecord(
            x=values["x"],
            y=values["y"],
            z=values["z"],
            length=values["l"],
            width=values["w"],
            height=values["h"],
            heading=wrap_angle(values["yaw"]),
            score=score,
        )
    except ValueError as exc:
        raise InvalidFieldError(line_no, str(exc)) from None


def parse_detection_log(
    source: IO[bytes] | IO[str] | Iterable[str],
    frame_id: str | None = None,
    *,
    strict: bool = False,
    error_sink: list[MalformedLineError] | None = None,
) -> Iterator[Frame]:
    """Parse a JSON-lines detection log into frames.

    ``frame_id``, when given, pins the sensor this log must belong to;
    otherwise the first line's id is adopted and enforced thereafter.
    Consecutive lines sharing (frame_id, t) are grouped into one frame.
    In non-strict mode bad lines are appended to ``error_sink`` (if
    provided) and logged; strict mode raises on the first one.
    """
    if isinstance(source, (bytes, str)):
        raise TypeError("source must be a file object or an iterable of lines")
    expected = frame_id
    pending: list[DetectionRecord] = []
    pending_key: tuple[str, float] | None = None

    def fail(err: MalformedLineError):
        if strict:
            raise err
        if error_sink is not None:
            error_sink.append(err)
        log.warning("skipping detection log %s", err)

    for line_no, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise MalformedLineError(line_no, "frame line must be a JSON object")
            t = float(obj["t"])
            fid = str(obj["frame_id"])
            dets = obj["detections"]
            if not math.isfinite(t):
                raise InvalidFieldError(line_no, f"non-finite timestamp {t!r}")
            if not isinstance(dets, list):
                raise MalformedLineError(line_no, "detections must be a list")
            if expected is not None and fid != expected:
                raise MalformedLineError(
                    line_no, f"frame_id {fid!r} does not match expected {expected!r}"
                )
            records = tuple(_detection_from_obj(d, line_no) for d in dets)
        except MalformedLineError as err:
            fail(err)
            continue
        except (KeyError, TypeError, ValueError) as exc:
            fail(MalformedLineError(line_no, f"bad frame line: {exc}"))
            continue
        if expected is None:
            expected = fid
        key = (fid, t)
        if pending_key == key:
            pending.extend(records)
            continue
        if pending_key is not None:
            yield Frame(pending_key[0], pending_key[1], tuple(pending))
        pending = list(records)
        pending_key = key
    if pending_key is not None:
        yield Frame(pending_key[0], pending_key[1], tuple(pending))


def open_detection_log(path) -> IO[str]:
    """Open a detection log, transparently handling gzip by magic bytes."""
    fh = open(path, "rb")
    magic = fh.read(2)
    fh.seek(0)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.GzipFile(fileobj=fh), encoding="utf-8")
    return io.TextIOWrapper(fh, encoding="utf-8")


def frame_to_json_line(frame: Frame) -> str:
    dets = []
    for d in frame.detections:
        obj = {
            "x": d.x,
            "y": d.y,
            "z": d.z,
            "l": d.length,
            "w": d.width,
            "h": d.height,
            "yaw": d.heading,
        }
        if d.score is not None:
            obj["score"] = d.score
        dets.append(obj)
    return json.dumps({"t": frame.t, "frame_id": frame.frame_id, "detections": dets})


def write_detection_log(frames: Iterable[Frame], fh: IO[str]) -> None:
    for frame in frames:
        fh.write(frame_to_json_line(frame))
        fh.write("\n")


def merge_streams(
    streams: Sequence[Iterable[Frame]],
    reorder_window: float = DEFAULT_REORDER_WINDOW_S,
    coordinate_frame: str = FRAME_SENSOR,
) -> MergedStream:
    """Merge per-sensor frame sequences into one nondecreasing stream.

    Each input may be locally jittered by up to ``reorder_window``
    seconds; a frame older than that relative to the newest already seen
    in its own stream raises :class:`OutOfOrderError`. Ties across
    sensors are broken by frame_id, so the merge is fully deterministic.
    """
    ordered: list[list[Frame]] = []
    for stream in streams:
        frames = list(stream)
        newest = -math.inf
        for f in frames:
            if f.t < newest - reorder_window:
                raise OutOfOrderError(f.frame_id, f.t, reorder_window)
            newest = max(newest, f.t)
        frames.sort(key=lambda f: f.t)  # stable: preserves file order on ties
        ordered.append(frames)
    merged = tuple(heap_merge(*ordered, key=lambda f: (f.t, f.frame_id)))
    return MergedStream(merged, coordinate_frame)


def frames_to_ned(stream: MergedStream, registry: FrameRegistry) -> MergedStream:
    """Map every detection center sensor -> ECEF -> NED.

    Headings are rotated by the yaw component of the composed rotation;
    box dimensions and scores are unchanged. Frame grouping, order, and
    originating frame_id are preserved exactly.
    """
    if stream.coordinate_frame != FRAME_SENSOR:
        raise ValueError(f"stream is already in {stream.coordinate_frame!r} coordinates")
    ned_rot = registry.ned_rotation().rotation
    origin = registry.origin_ecef()
    # One composed sensor->NED transform per sensor, applied in batch.
    composed: dict[str, tuple[np.ndarray, np.ndarray, float]] = {}
    for fid in {f.frame_id for f in stream.frames}:
        t = registry.transform_for(fid)
        rot = ned_rot @ t.rotation
        trans = ned_rot @ (t.translation - origin)
        yaw_corr = math.atan2(rot[1, 0], rot[0, 0])
        composed[fid] = (rot, trans, yaw_corr)

    out_frames = []
    for frame in stream.frames:
        rot, trans, yaw_corr = composed[frame.frame_id]
        if not frame.detections:
            out_frames.append(frame)
            continue
        pts = np.array([[d.x, d.y, d.z] for d in frame.detections])
        ned = _kernels.apply_rigid(pts, rot, trans)
        dets = tuple(
            replace(
                d,
                x=float(ned[i, 0]),
                y=float(ned[i, 1]),
                z=float(ned[i, 2]),
                heading=wrap_angle(d.heading + yaw_corr),
            )
            for i, d in enumerate(frame.detections)
        )
        out_frames.append(Frame(frame.frame_id, frame.t, dets))
    return MergedStream(tuple(out_frames), FRAME_NED)
