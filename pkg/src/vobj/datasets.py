"""On-disk RGB-D sequence format: images, poses, intrinsics, GT meshes.

Layout under a dataset root:
    rgb/%06d.png     8-bit RGB
    depth/%06d.png   16-bit, z-depth in units of 1/depth_scale metres, 0=invalid
    mask/%06d.png    16-bit instance ids, 0 = background
    poses.txt        per line: idx tx ty tz qx qy qz qw (camera-to-world)
    intrinsics.txt   fx fy cx cy width height depth_scale
    classes.txt      optional, per line: instance_id class_id
    gt_mesh/*.ply    optional ground-truth meshes
    manifest.json    optional generator metadata
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from vobj.geometry import pose_from_quaternion
from vobj.render import CameraIntrinsics


@dataclass
class Frame:
    frame_id: int
    rgb: np.ndarray  # [H, W, 3] float32 in [0, 1]
    depth: np.ndarray  # [H, W] float32 metres, 0 = invalid
    mask: np.ndarray  # [H, W] int32 instance ids, 0 = background
    pose: np.ndarray  # [4, 4] float64 camera-to-world


@dataclass
class DatasetDescriptor:
    root: Path
    n_frames: int
    intrinsics: CameraIntrinsics
    depth_scale: float
    temporally_consistent_masks: bool
    classes: dict[int, int]


class Dataset:
    """Lazy frame loader over the directory layout above."""

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"dataset root {self.root} does not exist")
        intr_path = self.root / "intrinsics.txt"
        if not intr_path.is_file():
            raise FileNotFoundError(f"missing {intr_path}")
        vals = np.loadtxt(intr_path, dtype=np.float64).ravel()
        if vals.size != 7:
            raise ValueError(f"{intr_path}: expected 7 values (fx fy cx cy width height depth_scale)")
        self.intrinsics = CameraIntrinsics(
            fx=float(vals[0]), fy=float(vals[1]), cx=float(vals[2]), cy=float(vals[3]),
            width=int(vals[4]), height=int(vals[5]),
        )
        self.depth_scale = float(vals[6])
        if self.depth_scale <= 0:
            raise ValueError(f"{intr_path}: depth_scale must be positive")

        self.poses: list[np.ndarray] = []
        pose_path = self.root / "poses.txt"
        if not pose_path.is_file():
            raise FileNotFoundError(f"missing {pose_path}")
        with open(pose_path) as fh:
            for lineno, line in enumerate(fh):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if len(parts) != 8:
                    raise ValueError(f"{pose_path}:{lineno + 1}: expected 8 fields, got {len(parts)}")
                idx = int(parts[0])
                if idx != len(self.poses):
                    raise ValueError(f"{pose_path}:{lineno + 1}: frame index {idx} out of order")
                t = np.array(parts[1:4], dtype=np.float64)
                q = np.array(parts[4:8], dtype=np.float64)
                try:
                    self.poses.append(pose_from_quaternion(t, q))
                except ValueError as exc:
                    raise ValueError(f"{pose_path}:{lineno + 1}: {exc}") from exc

        self.classes: dict[int, int] = {}
        cls_path = self.root / "classes.txt"
        if cls_path.is_file():
            rows = np.loadtxt(cls_path, dtype=np.int64, ndmin=2)
            self.classes = {int(r[0]): int(r[1]) for r in rows}

        self.manifest: dict = {}
        man_path = self.root / "manifest.json"
        if man_path.is_file():
            self.manifest = json.loads(man_path.read_text())
        self.temporally_consistent_masks = bool(
            self.manifest.get("temporally_consistent_masks", True)
        )
        for i in range(len(self.poses)):
            for sub in ("rgb", "depth", "mask"):
                p = self.root / sub / f"{i:06d}.png"
                if not p.is_file():
                    raise FileNotFoundError(f"dataset references missing file {p}")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def descriptor(self) -> DatasetDescriptor:
        return DatasetDescriptor(
            root=self.root,
            n_frames=len(self),
            intrinsics=self.intrinsics,
            depth_scale=self.depth_scale,
            temporally_consistent_masks=self.temporally_consistent_masks,
            classes=dict(self.classes),
        )

    def frame(self, i: int) -> Frame:
        if not (0 <= i < len(self)):
            raise IndexError(f"frame {i} out of range [0, {len(self)})")
        rgb_bgr = cv2.imread(str(self.root / "rgb" / f"{i:06d}.png"), cv2.IMREAD_COLOR)
        depth_raw = cv2.imread(str(self.root / "depth" / f"{i:06d}.png"), cv2.IMREAD_UNCHANGED)
        mask_raw = cv2.imread(str(self.root / "mask" / f"{i:06d}.png"), cv2.IMREAD_UNCHANGED)
        if rgb_bgr is None or depth_raw is None or mask_raw is None:
            raise IOError(f"failed to decode images for frame {i}")
        h, w = self.intrinsics.height, self.intrinsics.width
        for name, arr in (("rgb", rgb_bgr), ("depth", depth_raw), ("mask", mask_raw)):
            if arr.shape[:2] != (h, w):
                raise ValueError(
                    f"frame {i} {name} has shape {arr.shape[:2]}, intrinsics say {(h, w)}"
                )
        rgb = rgb_bgr[:, :, ::-1].astype(np.float32) / 255.0
        depth = depth_raw.astype(np.float32) / self.depth_scale
        return Frame(
            frame_id=i,
            rgb=rgb,
            depth=depth,
            mask=mask_raw.astype(np.int32),
            pose=self.poses[i],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self.frame(i)

    def gt_mesh_paths(self) -> dict[int, Path]:
        """instance_id -> ground-truth mesh path, from the manifest."""
        out = {}
        for key, info in self.manifest.get("instances", {}).items():
            if "mesh" in info:
                out[int(key)] = self.root / info["mesh"]
        return out


def save_frame_images(root: Path, i: int, rgb_u8: np.ndarray, depth_u16: np.ndarray,
                      mask_u16: np.ndarray) -> None:
    for sub in ("rgb", "depth", "mask"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    ok = cv2.imwrite(str(root / "rgb" / f"{i:06d}.png"), rgb_u8[:, :, ::-1])
    ok &= cv2.imwrite(str(root / "depth" / f"{i:06d}.png"), depth_u16)
    ok &= cv2.imwrite(str(root / "mask" / f"{i:06d}.png"), mask_u16)
    if not ok:
        raise IOError(f"failed to write frame {i} under {root}")


def write_pose_file(root: Path, poses: list[np.ndarray]) -> None:
    from vobj.geometry import matrix_to_quaternion

    lines = []
    for i, pose in enumerate(poses):
        q = matrix_to_quaternion(pose[:3, :3])
        t = pose[:3, 3]
        lines.append(
            f"{i} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} {q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}"
        )
    (root / "poses.txt").write_text("\n".join(lines) + "\n")


def write_intrinsics_file(root: Path, intr: CameraIntrinsics, depth_scale: float) -> None:
    (root / "intrinsics.txt").write_text(
        f"{intr.fx:.9f} {intr.fy:.9f} {intr.cx:.9f} {intr.cy:.9f} "
        f"{intr.width} {intr.height} {depth_scale:.3f}\n"
    )
