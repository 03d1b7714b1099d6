"""Boxes, poses and small linear-algebra helpers shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AABB:
    """Axis-aligned box in world coordinates, min strictly below max."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64).reshape(3)
        self.max = np.asarray(self.max, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.min)) or not np.all(np.isfinite(self.max)):
            raise ValueError("AABB bounds must be finite")
        if np.any(self.max <= self.min):
            raise ValueError(f"degenerate AABB: min={self.min}, max={self.max}")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def half_extent(self) -> np.ndarray:
        return 0.5 * (self.max - self.min)

    @property
    def volume(self) -> float:
        return float(np.prod(self.max - self.min))

    def union(self, other: "AABB") -> "AABB":
        return AABB(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    def padded(self, fraction: float) -> "AABB":
        pad = fraction * self.half_extent
        return AABB(self.min - pad, self.max + pad)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.min) & (pts <= self.max), axis=-1)

    @staticmethod
    def from_points(points: np.ndarray, trim: float = 0.0, min_extent: float = 1e-3) -> "AABB":
        """Tight box around points, optionally trimming a per-axis quantile.

        ``trim`` drops that fraction of extreme values on each side of each
        axis so a handful of depth outliers cannot blow the box up.
        ``min_extent`` keeps the box non-degenerate for flat or tiny blobs.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("cannot build an AABB from zero points")
        if not (0.0 <= trim < 0.5):
            raise ValueError(f"trim must be in [0, 0.5), got {trim}")
        if trim > 0.0 and pts.shape[0] > 10:
            lo = np.quantile(pts, trim, axis=0)
            hi = np.quantile(pts, 1.0 - trim, axis=0)
        else:
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
        thin = (hi - lo) < min_extent
        lo = np.where(thin, lo - 0.5 * min_extent, lo)
        hi = np.where(thin, hi + 0.5 * min_extent, hi)
        return AABB(lo, hi)


def aabb_iou(a: AABB, b: AABB) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    lo = np.maximum(a.min, b.min)
    hi = np.minimum(a.max, b.max)
    if np.any(hi <= lo):
        return 0.0
    inter = float(np.prod(hi - lo))
    return inter / (a.volume + b.volume - inter)


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a quaternion given as (qx, qy, qz, qw)."""
    x, y, z, w = np.asarray(q, dtype=np.float64).reshape(4)
    n = x * x + y * y + z * z + w * w
    if abs(n - 1.0) > 1e-3:
        raise ValueError(f"quaternion norm {np.sqrt(n):.6f} deviates from 1 by more than 1e-3")
    s = 2.0 / n
    return np.array(
        [
            [1 - s * (y * y + z * z), s * (x * y - w * z), s * (x * z + w * y)],
            [s * (x * y + w * z), 1 - s * (x * x + z * z), s * (y * z - w * x)],
            [s * (x * z - w * y), s * (y * z + w * x), 1 - s * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion (qx, qy, qz, qw) with qw >= 0 from a rotation matrix."""
    m = np.asarray(rot, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(m[i, i] - m[j, j] - m[k, k] + 1.0) * 2
        q = np.empty(3)
        q[i] = 0.25 * s
        q[j] = (m[j, i] + m[i, j]) / s
        q[k] = (m[k, i] + m[i, k]) / s
        w = (m[k, j] - m[j, k]) / s
        x, y, z = q
    quat = np.array([x, y, z, w])
    if quat[3] < 0:
        quat = -quat
    return quat / np.linalg.norm(quat)


def pose_from_quaternion(translation: np.ndarray, quat: np.ndarray) -> np.ndarray:
    """4x4 camera-to-world matrix from translation and (qx, qy, qz, qw)."""
    pose = np.eye(4)
    pose[:3, :3] = quaternion_to_matrix(quat)
    pose[:3, 3] = np.asarray(translation, dtype=np.float64).reshape(3)
    return pose


def look_at(eye: np.ndarray, target: np.ndarray, up: np.ndarray = (0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose looking from eye to target.

    Camera axes follow the usual pinhole convention: +z forward (towards the
    target), +x right, +y down.
    """
    eye = np.asarray(eye, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    up = np.asarray(up, dtype=np.float64).reshape(3)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n < 1e-9:
        raise ValueError("look_at eye and target coincide")
    fwd = fwd / n
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        # Forward is parallel to up; pick an arbitrary perpendicular axis.
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        rn = np.linalg.norm(right)
        if rn < 1e-9:
            right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
            rn = np.linalg.norm(right)
    right = right / rn
    down = np.cross(fwd, right)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = fwd
    pose[:3, 3] = eye
    return pose
