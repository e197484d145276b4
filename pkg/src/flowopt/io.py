"""Binary cloud/flow file formats plus an ASCII input fallback.

Cloud files: magic "OFPC", u32 LE format version (1), u64 LE point count,
then count x 3 IEEE-754 float32 LE (x, y, z in meters). Flow files use the
same layout under magic "OFFL" and may carry a trailing motion block: magic
"OFRT" followed by 6 float64 LE (rotation vector, then translation).

On input, files without a known magic are parsed as ASCII xyz: one point per
line, three whitespace-separated reals, '#' comments ignored. Output is
always binary; coordinates are quantized to float32 once on first write and
round-trip bit-exactly afterwards.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import (FlowField, FlowOptError, NonFiniteCoordinate, PointCloud,
                   RigidMotion)

CLOUD_MAGIC = b"OFPC"
FLOW_MAGIC = b"OFFL"
MOTION_MAGIC = b"OFRT"
FORMAT_VERSION = 1


class FileFormatError(FlowOptError):
    """The byte stream does not satisfy the declared layout."""


def _pack_vectors(magic: bytes, vectors: np.ndarray) -> bytes:
    head = magic + struct.pack("<IQ", FORMAT_VERSION, vectors.shape[0])
    return head + np.ascontiguousarray(vectors, dtype="<f4").tobytes()


def _unpack_vectors(data: bytes, magic: bytes, path: Path) -> tuple[np.ndarray, bytes]:
    if len(data) < 16:
        raise FileFormatError(f"{path}: truncated header")
    version, count = struct.unpack("<IQ", data[4:16])
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported format version {version}")
    payload = 12 * count
    if len(data) < 16 + payload:
        raise FileFormatError(
            f"{path}: declared {count} points but payload is short")
    vectors = np.frombuffer(data[16:16 + payload], dtype="<f4").reshape(count, 3)
    vectors = vectors.astype(np.float64)
    if not np.isfinite(vectors).all():
        raise NonFiniteCoordinate(f"{path}: non-finite value in payload")
    return vectors, data[16 + payload:]


def _parse_ascii(path: Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 3:
            raise FileFormatError(
                f"{path}:{lineno}: expected 3 values per line, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: not a number") from None
    if not rows:
        raise FileFormatError(f"{path}: no points found")
    pts = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(pts).all():
        raise NonFiniteCoordinate(f"{path}: non-finite value")
    return pts


def write_point_cloud(path, cloud: PointCloud) -> None:
    Path(path).write_bytes(_pack_vectors(CLOUD_MAGIC, cloud.points))


def read_point_cloud(path) -> PointCloud:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == CLOUD_MAGIC:
        vectors, rest = _unpack_vectors(data, CLOUD_MAGIC, path)
        if rest:
            raise FileFormatError(f"{path}: {len(rest)} trailing bytes")
        return PointCloud(vectors)
    if data[:4] in (FLOW_MAGIC, MOTION_MAGIC):
        raise FileFormatError(f"{path}: not a cloud file (magic {data[:4]!r})")
    return PointCloud(_parse_ascii(path))


def write_flow(path, flow: FlowField, motion: RigidMotion | None = None) -> None:
    blob = _pack_vectors(FLOW_MAGIC, flow.vectors)
    if motion is not None:
        blob += MOTION_MAGIC + np.concatenate([motion.r, motion.t]).astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def read_flow(path) -> tuple[FlowField, RigidMotion | None]:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != FLOW_MAGIC:
        raise FileFormatError(f"{path}: not a flow file (magic {data[:4]!r})")
    vectors, rest = _unpack_vectors(data, FLOW_MAGIC, path)
    motion = None
    if rest:
        if rest[:4] != MOTION_MAGIC or len(rest) != 4 + 48:
            raise FileFormatError(f"{path}: malformed motion block")
        values = np.frombuffer(rest[4:], dtype="<f8")
        motion = RigidMotion(values[:3], values[3:])
    return FlowField(vectors), motion
