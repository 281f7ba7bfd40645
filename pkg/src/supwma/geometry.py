"""Streamline geometry and on-disk formats.

A streamline is an ordered polyline in RAS millimeters, held as a
(num_points, 3) float64 array with num_points >= 2.  This module covers
arc-length resampling to a fixed point count, affine transforms,
orientation utilities, and bit-exact serialization.

SLP1 binary layout (little-endian):
    magic b"SLP1" | uint32 streamline count |
    per streamline: uint16 point count (>= 2), then count*3 float32
    coordinates, x,y,z interleaved.

Coordinates live on disk in single precision and are promoted to double
for all arithmetic.  Labels ride in a separate CSV with header
``index,label``, one row per streamline in file order.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SLP_MAGIC = b"SLP1"


def as_points(points) -> np.ndarray:
    """Coerce to a validated (P, 3) float64 polyline.

    Raises ValueError for wrong shape, fewer than 2 points, or
    non-finite coordinates.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"streamline must have shape (P, 3), got {pts.shape}")
    if pts.shape[0] < 2:
        raise ValueError("streamline needs at least 2 points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("streamline has non-finite coordinates")
    return pts


def arc_length(points) -> float:
    """Total polyline length in millimeters."""
    pts = as_points(points)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def resample(points, num_points: int) -> np.ndarray:
    """Resample a polyline to ``num_points`` points equidistant in arc length.

    Linear interpolation along the input segments; the first and last
    output points coincide with the input endpoints exactly.  Consecutive
    duplicate input points are tolerated and collapse away.

    Raises ValueError on ``num_points < 2`` or a degenerate input whose
    total arc length is zero.
    """
    pts = as_points(points)
    if num_points < 2:
        raise ValueError("num_points must be >= 2")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate(([True], seg > 0.0))
    pts = pts[keep]
    if pts.shape[0] < 2:
        raise ValueError("zero arc length (all points identical)")
    seg = seg[seg > 0.0]
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    targets = np.linspace(0.0, cum[-1], num_points)
    out = np.empty((num_points, 3), dtype=np.float64)
    for axis in range(3):
        out[:, axis] = np.interp(targets, cum, pts[:, axis])
    # endpoints bit-exact regardless of interpolation roundoff
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def reverse(points) -> np.ndarray:
    """Return the polyline with point order flipped."""
    return as_points(points)[::-1].copy()


@dataclass
class StreamlineSet:
    """A sequence of streamlines with optional aligned class labels.

    ``streamlines`` holds (P_i, 3) float64 arrays; ``labels`` is an int
    array of the same length when present, each label a non-negative
    class index.
    """

    streamlines: list = field(default_factory=list)
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if not np.issubdtype(self.labels.dtype, np.integer):
                raise ValueError("labels must be integers")
            if len(self.labels) != len(self.streamlines):
                raise ValueError(
                    f"label count {len(self.labels)} does not match "
                    f"streamline count {len(self.streamlines)}"
                )
            if len(self.labels) and self.labels.min() < 0:
                raise ValueError("labels must be non-negative")

    def __len__(self) -> int:
        return len(self.streamlines)

    @classmethod
    def from_polylines(cls, polylines, labels=None) -> "StreamlineSet":
        """Validate each polyline and build a set."""
        return cls([as_points(p) for p in polylines], labels)


def validate_affine(matrix) -> np.ndarray:
    """Check a 4x4 homogeneous affine: last row (0,0,0,1), invertible 3x3."""
    T = np.asarray(matrix, dtype=np.float64)
    if T.shape != (4, 4):
        raise ValueError(f"affine must be 4x4, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("affine has non-finite entries")
    if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError("affine last row must be (0, 0, 0, 1)")
    if abs(np.linalg.det(T[:3, :3])) < 1e-12:
        raise ValueError("affine 3x3 block is singular")
    return T


def transform_points(points: np.ndarray, affine) -> np.ndarray:
    """Apply a validated 4x4 affine to a (P, 3) array."""
    T = validate_affine(affine)
    return points @ T[:3, :3].T + T[:3, 3]


def apply_affine(streamline_set: StreamlineSet, affine) -> StreamlineSet:
    """Map every point of every streamline through the affine; labels pass through."""
    T = validate_affine(affine)
    linear = T[:3, :3].T
    offset = T[:3, 3]
    moved = [pts @ linear + offset for pts in streamline_set.streamlines]
    labels = None if streamline_set.labels is None else streamline_set.labels.copy()
    return StreamlineSet(moved, labels)


def to_feature_batch(streamline_set, num_points: int) -> np.ndarray:
    """Resample a set (or list) of streamlines into an (M, num_points, 3) batch.

    Resampling errors are re-raised with the offending streamline index.
    """
    streamlines = getattr(streamline_set, "streamlines", streamline_set)
    batch = np.zeros((len(streamlines), num_points, 3), dtype=np.float64)
    for i, pts in enumerate(streamlines):
        try:
            batch[i] = resample(pts, num_points)
        except ValueError as exc:
            raise ValueError(f"streamline {i}: {exc}") from exc
    return batch


# ---------------------------------------------------------------------------
# SLP1 binary I/O
# ---------------------------------------------------------------------------

def write_slp(streamline_set: StreamlineSet, path) -> None:
    """Serialize a set to SLP1. Coordinates are cast to float32."""
    chunks = [SLP_MAGIC, struct.pack("<I", len(streamline_set))]
    for i, pts in enumerate(streamline_set.streamlines):
        num = pts.shape[0]
        if num < 2:
            raise ValueError(f"streamline {i}: point count < 2")
        if num > 0xFFFF:
            raise ValueError(f"streamline {i}: {num} points exceeds SLP1 limit of 65535")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"streamline {i}: non-finite coordinates")
        chunks.append(struct.pack("<H", num))
        chunks.append(np.ascontiguousarray(pts, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_slp(path) -> StreamlineSet:
    """Parse an SLP1 file, validating magic, counts, and finiteness."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError("SLP1: truncated file (missing header)")
    if data[:4] != SLP_MAGIC:
        raise ValueError("SLP1: bad magic")
    (count,) = struct.unpack_from("<I", data, 4)
    streamlines = []
    offset = 8
    for i in range(count):
        if offset + 2 > len(data):
            raise ValueError(f"SLP1: truncated file at streamline {i}")
        (num,) = struct.unpack_from("<H", data, offset)
        if num < 2:
            raise ValueError(f"SLP1: streamline {i} point count < 2")
        offset += 2
        end = offset + num * 12
        if end > len(data):
            raise ValueError(f"SLP1: truncated file at streamline {i}")
        pts = (
            np.frombuffer(data, dtype="<f4", count=num * 3, offset=offset)
            .reshape(num, 3)
            .astype(np.float64)
        )
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"SLP1: streamline {i} has non-finite (NaN/Inf) coordinates")
        streamlines.append(pts)
        offset = end
    if offset != len(data):
        raise ValueError("SLP1: trailing bytes after last streamline")
    return StreamlineSet(streamlines)


# ---------------------------------------------------------------------------
# Label CSV I/O
# ---------------------------------------------------------------------------

def write_labels(labels, path) -> None:
    """Write class labels as CSV rows ``index,label``."""
    labels = np.asarray(labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for i, lab in enumerate(labels):
            writer.writerow([i, int(lab)])


def read_labels(path, expected_count: int | None = None) -> np.ndarray:
    """Read a label CSV; labels are aligned by row order.

    ``expected_count`` (when given) must match the number of rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["index", "label"]:
            raise ValueError("label file must start with header 'index,label'")
        values = []
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"label row {len(values)}: expected 2 columns, got {len(row)}")
            try:
                lab = int(row[1])
            except ValueError:
                raise ValueError(f"non-integer label {row[1]!r} at row {len(values)}") from None
            if lab < 0:
                raise ValueError(f"negative label {lab} at row {len(values)}")
            values.append(lab)
    if expected_count is not None and len(values) != expected_count:
        raise ValueError(
            f"label count mismatch: file has {len(values)}, expected {expected_count}"
        )
    return np.asarray(values, dtype=np.int64)
