"""Point clouds: containers, surface normals, voxel keypoints and file IO.

Clouds are plain ``(N, 3)`` float64 arrays wrapped in a small dataclass.
Normals are estimated by plane fits over a fixed-radius neighborhood and
oriented toward the origin (the sensor convention), which keeps every
downstream descriptor deterministic for a given cloud.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

OT3D_MAGIC = b"OT3D"


class CloudFormatError(ValueError):
    """Raised when a cloud file has a malformed or unsupported layout."""


@dataclass
class PointCloud:
    """An unordered set of 3D points, optionally with unit normals.

    ``degenerate`` flags points whose normal came from the centroid-direction
    fallback (fewer than 3 neighbors, or a rank-deficient plane fit).
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != self.points.shape:
                raise ValueError("normals must match point count")
            lengths = np.linalg.norm(self.normals, axis=1)
            if not np.allclose(lengths, 1.0, atol=1e-6):
                raise ValueError("normals must be unit length")
        if self.degenerate is not None:
            self.degenerate = np.asarray(self.degenerate, dtype=bool)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None


@dataclass(frozen=True)
class Keypoint:
    """A cloud point chosen to anchor a local descriptor."""

    position: np.ndarray
    normal: np.ndarray
    source_index: int


def _orient(normal: np.ndarray, point: np.ndarray, viewpoint: np.ndarray) -> np.ndarray:
    """Flip ``normal`` so it points toward the viewpoint; deterministic on ties."""
    d = float(np.dot(normal, viewpoint - point))
    if d < 0:
        return -normal
    if d == 0.0:
        # sign is otherwise arbitrary: make the largest-magnitude component positive
        j = int(np.argmax(np.abs(normal)))
        if normal[j] < 0:
            return -normal
    return normal


def estimate_normals(cloud: PointCloud, radius: float) -> PointCloud:
    """Estimate unit normals by PCA plane fits over neighbors within ``radius``.

    Normals are oriented toward the origin. Points with fewer than three
    neighbors (or collinear ones) fall back to the centroid-to-point
    direction and are flagged degenerate.
    """
    if len(cloud) == 0:
        raise ValueError("cannot estimate normals of an empty cloud")
    if radius <= 0:
        raise ValueError("radius must be positive")

    pts = cloud.points
    centroid = pts.mean(axis=0)
    tree = cKDTree(pts)
    neighborhoods = tree.query_ball_point(pts, r=radius)
    viewpoint = np.zeros(3)

    normals = np.empty_like(pts)
    degenerate = np.zeros(len(cloud), dtype=bool)
    for i, idx in enumerate(neighborhoods):
        neigh = pts[idx]
        ok = len(idx) >= 3
        if ok:
            centered = neigh - neigh.mean(axis=0)
            cov = centered.T @ centered
            evals, evecs = np.linalg.eigh(cov)
            # plane fit needs 2D spread; middle eigenvalue ~0 means collinear
            ok = evals[1] > 1e-12 * max(evals[2], 1e-300)
            normal = evecs[:, 0]
        if not ok:
            normal = pts[i] - centroid
            length = np.linalg.norm(normal)
            normal = normal / length if length > 0 else np.array([0.0, 0.0, 1.0])
            degenerate[i] = True
        normals[i] = _orient(normal, pts[i], viewpoint)

    return PointCloud(pts.copy(), normals, degenerate)


def ensure_normals(cloud: PointCloud, radius: float) -> PointCloud:
    """Return the cloud itself when normals exist, otherwise estimate them."""
    return cloud if cloud.has_normals else estimate_normals(cloud, radius)


def voxel_indices(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Integer grid coordinates of each point on a grid anchored at the min corner."""
    origin = points.min(axis=0)
    return np.floor((points - origin) / voxel_size).astype(np.int64)


def select_keypoints(cloud: PointCloud, voxel_size: float) -> list[Keypoint]:
    """One keypoint per occupied voxel: the member point nearest the voxel center.

    The grid is axis-aligned with edge ``voxel_size`` and anchored at the
    cloud's minimum corner; ties go to the lowest point index.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    if len(cloud) == 0:
        raise ValueError("cannot select keypoints from an empty cloud")
    if not cloud.has_normals:
        raise ValueError("cloud must have normals before keypoint selection")

    pts = cloud.points
    origin = pts.min(axis=0)
    cells = voxel_indices(pts, voxel_size)

    buckets: dict[tuple[int, int, int], list[int]] = {}
    for i, cell in enumerate(map(tuple, cells)):
        buckets.setdefault(cell, []).append(i)

    keypoints = []
    for cell in sorted(buckets):
        members = buckets[cell]
        center = origin + (np.asarray(cell, dtype=np.float64) + 0.5) * voxel_size
        dists = np.linalg.norm(pts[members] - center, axis=1)
        best = members[int(np.argmin(dists))]  # argmin keeps the lowest index on ties
        keypoints.append(Keypoint(pts[best].copy(), cloud.normals[best].copy(), best))
    return keypoints


# ---------------------------------------------------------------------------
# File formats: ASCII PCD-style text and the compact OT3D binary.
# ---------------------------------------------------------------------------

_PCD_HEADER_KEYS = {
    "VERSION", "FIELDS", "SIZE", "TYPE", "COUNT",
    "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA",
}


def _load_pcd_text(text: str, origin: str) -> PointCloud:
    fields = None
    count = None
    data_lines: list[str] = []
    in_data = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        token = line.split()[0].upper()
        if not in_data and token in _PCD_HEADER_KEYS:
            parts = line.split()
            if token == "FIELDS":
                fields = [p.lower() for p in parts[1:]]
            elif token == "POINTS":
                try:
                    count = int(parts[1])
                except (IndexError, ValueError):
                    raise CloudFormatError(f"{origin}: bad POINTS line {line!r}")
            elif token == "DATA":
                if len(parts) < 2 or parts[1].lower() != "ascii":
                    raise CloudFormatError(f"{origin}: only DATA ascii is supported")
                in_data = True
            continue
        data_lines.append(line)

    if fields is None or fields[:3] != ["x", "y", "z"]:
        raise CloudFormatError(f"{origin}: header must declare FIELDS x y z")
    if count is None:
        raise CloudFormatError(f"{origin}: header must declare POINTS")
    if len(data_lines) < count:
        raise CloudFormatError(
            f"{origin}: expected {count} data lines, found {len(data_lines)}")

    points = np.empty((count, 3), dtype=np.float64)
    for i in range(count):
        parts = data_lines[i].split()
        if len(parts) < 3:
            raise CloudFormatError(f"{origin}: short data line {data_lines[i]!r}")
        try:
            points[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError:
            raise CloudFormatError(f"{origin}: non-numeric data line {data_lines[i]!r}")
    return PointCloud(points)


def _load_ot3d_bytes(blob: bytes, origin: str) -> PointCloud:
    if len(blob) < 8:
        raise CloudFormatError(f"{origin}: truncated OT3D header")
    (count,) = struct.unpack("<I", blob[4:8])
    expected = 8 + 12 * count
    if len(blob) < expected:
        raise CloudFormatError(
            f"{origin}: OT3D payload truncated ({len(blob)} < {expected} bytes)")
    flat = np.frombuffer(blob, dtype="<f4", count=3 * count, offset=8)
    return PointCloud(flat.reshape(count, 3).astype(np.float64))


def load_cloud_bytes(blob: bytes, origin: str = "<bytes>") -> PointCloud:
    """Parse a cloud from raw bytes, sniffing OT3D binary vs ASCII PCD."""
    if blob[:4] == OT3D_MAGIC:
        return _load_ot3d_bytes(blob, origin)
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError:
        raise CloudFormatError(f"{origin}: neither OT3D binary nor text PCD")
    return _load_pcd_text(text, origin)


def load_cloud(path: str | Path) -> PointCloud:
    """Load a point cloud file; normals are left for the caller to estimate."""
    path = Path(path)
    return load_cloud_bytes(path.read_bytes(), origin=str(path))


def save_pcd(cloud: PointCloud, path: str | Path) -> None:
    n = len(cloud)
    lines = [
        "# ot3d ascii cloud",
        "VERSION 0.7",
        "FIELDS x y z",
        "SIZE 4 4 4",
        "TYPE F F F",
        "COUNT 1 1 1",
        f"WIDTH {n}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {n}",
        "DATA ascii",
    ]
    lines.extend(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}" for p in cloud.points)
    Path(path).write_text("\n".join(lines) + "\n")


def cloud_to_ot3d_bytes(cloud: PointCloud) -> bytes:
    blob = bytearray(OT3D_MAGIC)
    blob += struct.pack("<I", len(cloud))
    blob += cloud.points.astype("<f4").tobytes()
    return bytes(blob)


def save_ot3d(cloud: PointCloud, path: str | Path) -> None:
    Path(path).write_bytes(cloud_to_ot3d_bytes(cloud))
