"""Landmark data model: canonical normalization, JSONL ingestion, NME metric.

A landmark set is an ordered list of n 2-D points (default n=68, iBUG
ordering). Flattened vectors use the interleaved layout
(x1, y1, x2, y2, ..., xn, yn), so the model dimension is 2n.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError

DEFAULT_POINT_COUNT = 68

# Outer eye corners of the 68-point annotation (0-based).
LEFT_OUTER_EYE = 36
RIGHT_OUTER_EYE = 45

# Bounding-box margin: the tight box is blown up by 80% before mapping
# the enclosing square onto the unit frame.
BOX_MARGIN = 1.8

_INTEROCULAR_FLOOR = 1e-9


def _as_point_array(points, n: int | None) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FormatError(
            f"landmark points must be an (n, 2) array, got shape {arr.shape}",
            code="bad_point_shape",
        )
    if n is not None and arr.shape[0] != n:
        raise FormatError(
            f"expected {n} points, got {arr.shape[0]}",
            code="inconsistent_point_count",
        )
    if not np.all(np.isfinite(arr)):
        raise FormatError("non-finite coordinate", code="nonfinite_coordinate")
    return arr


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """One face's n 2-D points. Immutable; coordinates must be finite."""

    points: np.ndarray

    def __init__(self, points, n: int | None = None):
        arr = _as_point_array(points, n)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "points", arr)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def vector(self) -> np.ndarray:
        """Flattened (2n,) view: (x1, y1, ..., xn, yn)."""
        return self.points.reshape(-1)

    @classmethod
    def from_vector(cls, vec) -> "LandmarkSet":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size % 2 != 0:
            raise FormatError(
                f"flattened landmark vector must have even length, got {vec.shape}",
                code="bad_point_shape",
            )
        return cls(vec.reshape(-1, 2))

    def allclose(self, other: "LandmarkSet", *, atol: float = 0.0, rtol: float = 1e-12) -> bool:
        return self.n == other.n and np.allclose(self.points, other.points, atol=atol, rtol=rtol)


@dataclass(frozen=True, eq=False)
class LandmarkRecord:
    identity: str
    frame: str
    landmarks: LandmarkSet
    space: str = "canonical"  # "canonical" | "pixel"


@dataclass(frozen=True, eq=False)
class LandmarkDataset:
    """Non-empty list of landmark records sharing one point count."""

    records: tuple[LandmarkRecord, ...]

    def __init__(self, records):
        records = tuple(records)
        if not records:
            raise FormatError("empty dataset", code="empty_dataset")
        n = records[0].landmarks.n
        for i, rec in enumerate(records):
            if rec.landmarks.n != n:
                raise FormatError(
                    f"record {i} has {rec.landmarks.n} points, expected {n}",
                    code="inconsistent_point_count",
                )
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def n(self) -> int:
        return self.records[0].landmarks.n

    def is_canonical(self) -> bool:
        return all(rec.space == "canonical" for rec in self.records)

    def matrix(self) -> np.ndarray:
        """Stacked flattened landmarks, shape (N, 2n)."""
        return np.stack([rec.landmarks.vector for rec in self.records])

    def landmark_sets(self) -> list[LandmarkSet]:
        return [rec.landmarks for rec in self.records]


@dataclass(frozen=True)
class NmeReport:
    """Per-sample normalized mean errors plus their arithmetic mean."""

    per_sample: tuple[float, ...]
    mean: float
    k: int | None = None
    skipped: int = 0


def parse_landmark_records(stream, format: str = "jsonl") -> LandmarkDataset:
    """Parse a landmark dataset from a byte stream or bytes.

    One JSON object per line:
    ``{"id": ..., "frame": ..., "points": [[x, y], ...], "space": "pixel"|"canonical"}``.
    Errors name the offending 1-based line number.
    """
    if format != "jsonl":
        raise FormatError(f"unsupported dataset format {format!r}", code="unsupported_format")
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    try:
        text = stream.read().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"dataset is not UTF-8: {exc}", code="malformed_line") from exc

    records: list[LandmarkRecord] = []
    n: int | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})", code="malformed_line") from exc
        if not isinstance(obj, dict):
            raise FormatError(f"line {lineno}: record must be a JSON object", code="malformed_line")
        try:
            identity = str(obj["id"])
            frame = str(obj["frame"])
            points = obj["points"]
        except KeyError as exc:
            raise FormatError(f"line {lineno}: missing field {exc.args[0]!r}", code="malformed_line") from exc
        space = obj.get("space", "canonical")
        if space not in ("pixel", "canonical"):
            raise FormatError(f"line {lineno}: unknown space {space!r}", code="malformed_line")
        try:
            lms = LandmarkSet(points, n=n)
        except FormatError as exc:
            raise FormatError(f"line {lineno}: {exc}", code=exc.code) from exc
        if n is None:
            n = lms.n
        records.append(LandmarkRecord(identity, frame, lms, space))
    if not records:
        raise FormatError("empty dataset", code="empty_dataset")
    return LandmarkDataset(records)


def record_to_json_obj(rec: LandmarkRecord) -> dict:
    return {
        "id": rec.identity,
        "frame": rec.frame,
        "points": [[float(x), float(y)] for x, y in rec.landmarks.points],
        "space": rec.space,
    }


def serialize_landmark_records(dataset: LandmarkDataset) -> bytes:
    """Inverse of :func:`parse_landmark_records` (JSONL, full float precision)."""
    lines = [json.dumps(record_to_json_obj(rec)) for rec in dataset]
    return ("\n".join(lines) + "\n").encode("utf-8")


def normalize_to_canonical(raw: LandmarkSet) -> LandmarkSet:
    """Map a pixel-space landmark set into the unit frame.

    The tight bounding box is blown up by 80% to a square of side
    ``1.8 * max(width, height)`` centered on the box center; that square is
    mapped onto [0,1]^2 with a uniform scale. Translation drops out by
    construction, so the result is invariant to raw-space translation and
    uniform scaling.
    """
    pts = raw.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = hi - lo
    side = BOX_MARGIN * float(extent.max())
    if side <= 0.0:
        raise DomainError("degenerate bounding box: all points coincident", code="degenerate_box")
    center = (lo + hi) / 2.0
    canonical = (pts - center) / side + 0.5
    return LandmarkSet(canonical)


def normalize_dataset(dataset: LandmarkDataset) -> LandmarkDataset:
    """Normalize every pixel-space record; canonical records pass through."""
    out = []
    for rec in dataset:
        if rec.space == "pixel":
            out.append(LandmarkRecord(rec.identity, rec.frame, normalize_to_canonical(rec.landmarks), "canonical"))
        else:
            out.append(rec)
    return LandmarkDataset(out)


def interocular_distance(lms: LandmarkSet) -> float:
    """Euclidean distance between the outer eye corners (indices 36 and 45)."""
    if lms.n != DEFAULT_POINT_COUNT:
        raise DomainError(
            f"inter-ocular distance requires 68 points, got {lms.n}",
            code="point_count",
        )
    d = float(np.linalg.norm(lms.points[LEFT_OUTER_EYE] - lms.points[RIGHT_OUTER_EYE]))
    if d < _INTEROCULAR_FLOOR:
        raise DomainError("degenerate inter-ocular distance", code="degenerate_interocular")
    return d


def nme(pred: LandmarkSet, truth: LandmarkSet) -> float:
    """Normalized mean error: mean per-point L2 error over the truth's
    inter-ocular distance."""
    if pred.n != truth.n:
        raise DomainError(
            f"point count mismatch: {pred.n} vs {truth.n}", code="point_count"
        )
    d = interocular_distance(truth)
    per_point = np.linalg.norm(pred.points - truth.points, axis=1)
    return float(per_point.mean() / d)


def dataset_fingerprint(dataset: LandmarkDataset) -> str:
    """Deterministic hex digest of record ids, frames and coordinates."""
    h = hashlib.sha256()
    for rec in dataset:
        h.update(rec.identity.encode("utf-8"))
        h.update(b"\x00")
        h.update(rec.frame.encode("utf-8"))
        h.update(b"\x00")
        h.update(np.ascontiguousarray(rec.landmarks.points).tobytes())
    return h.hexdigest()
