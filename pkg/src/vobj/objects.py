"""Object instances, mask-to-instance association and keyframe buffers.

Instance ids in the stored masks are only trusted within a frame: association
to map objects uses semantic class plus 3D box overlap, so datasets whose
mask ids are shuffled per frame still map to a stable set of objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vobj.geometry import AABB, aabb_iou
from vobj.render import CameraIntrinsics
from vobj.rng import PURPOSE_PIXELS, keyed_rng

BACKGROUND_CLASS = 0


@dataclass(frozen=True)
class AssociationConfig:
    iou_threshold: float = 0.2
    outlier_trim: float = 0.02
    bound_pad: float = 0.10
    min_pixels: int = 100
    keyframe_stride_object: int = 25
    keyframe_stride_background: int = 50
    # Keyframe bboxes are dilated by this many pixels beyond the tight mask
    # bbox so that rays passing just outside the silhouette (including under
    # the object) carry empty-space supervision.
    bbox_margin_px: int = 10

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.keyframe_stride_object < 1 or self.keyframe_stride_background < 1:
            raise ValueError("keyframe strides must be >= 1")
        if self.min_pixels < 1:
            raise ValueError(f"min_pixels must be >= 1, got {self.min_pixels}")
        if self.bbox_margin_px < 0:
            raise ValueError(f"bbox_margin_px must be >= 0, got {self.bbox_margin_px}")


def rle_encode(mask: np.ndarray) -> np.ndarray:
    """Run lengths of a flattened boolean mask, starting with a zero-run.

    Alternates counts of False and True pixels (first entry may be 0), so the
    decoded mask is reconstructed exactly.
    """
    flat = np.asarray(mask, bool).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=np.int64)
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(starts)
    if flat[0]:
        runs = np.concatenate([[0], runs])
    return runs.astype(np.int64)


def rle_decode(runs: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    total = int(np.prod(shape))
    if runs.size == 0:
        if total != 0:
            raise ValueError("empty run list for non-empty mask")
        return np.zeros(shape, dtype=bool)
    if int(runs.sum()) != total:
        raise ValueError(f"run lengths sum to {int(runs.sum())}, expected {total}")
    values = np.arange(runs.size) % 2 == 1
    return np.repeat(values, runs).reshape(shape)


@dataclass
class Detection:
    """One instance mask observed in one frame, lifted to a 3D box."""

    frame_id: int
    semantic_class: int
    bbox: tuple[int, int, int, int]  # (u0, v0, u1, v1), half-open
    n_pixels: int
    mask: np.ndarray  # bool crop of shape (v1-v0, u1-u0)
    aabb: AABB


@dataclass
class Keyframe:
    frame_id: int
    pose: np.ndarray  # camera-to-world, 4x4
    bbox: tuple[int, int, int, int]
    mask: np.ndarray  # bool crop
    rgb: np.ndarray  # float32 crop, [h, w, 3] in [0, 1]
    depth: np.ndarray  # float32 crop, metres, 0 = invalid


@dataclass
class ObjectInstance:
    object_id: int
    semantic_class: int
    aabb: AABB
    pe_scale: float
    model_index: int
    is_background: bool = False
    active: bool = True
    obs_count: int = 0
    keyframes: list[Keyframe] = field(default_factory=list)

    def padded_aabb(self, fraction: float) -> AABB:
        return self.aabb.padded(fraction)


class ObjectMap:
    """Mutable registry of mapped instances; id 0 is the background."""

    def __init__(self):
        self.instances: dict[int, ObjectInstance] = {}
        self._next_id = 1

    @property
    def background(self) -> ObjectInstance | None:
        return self.instances.get(0)

    def objects(self) -> list[ObjectInstance]:
        return [inst for oid, inst in sorted(self.instances.items()) if oid != 0]

    def add_background(self, aabb: AABB, pe_scale: float, model_index: int) -> ObjectInstance:
        if 0 in self.instances:
            raise ValueError("background instance already registered")
        inst = ObjectInstance(
            object_id=0,
            semantic_class=BACKGROUND_CLASS,
            aabb=aabb,
            pe_scale=pe_scale,
            model_index=model_index,
            is_background=True,
        )
        self.instances[0] = inst
        return inst

    def add_object(self, semantic_class: int, aabb: AABB, pe_scale: float, model_index: int) -> ObjectInstance:
        oid = self._next_id
        self._next_id += 1
        inst = ObjectInstance(
            object_id=oid,
            semantic_class=semantic_class,
            aabb=aabb,
            pe_scale=pe_scale,
            model_index=model_index,
        )
        self.instances[oid] = inst
        return inst

    def restore(self, inst: ObjectInstance) -> None:
        """Re-register an instance loaded from a checkpoint."""
        if inst.object_id in self.instances:
            raise ValueError(f"duplicate object id {inst.object_id}")
        self.instances[inst.object_id] = inst
        if not inst.is_background:
            self._next_id = max(self._next_id, inst.object_id + 1)


def backproject(
    us: np.ndarray, vs: np.ndarray, z: np.ndarray, intrinsics: CameraIntrinsics, pose: np.ndarray
) -> np.ndarray:
    """World-space points from pixel coordinates and z-depth."""
    x = (us - intrinsics.cx) / intrinsics.fx * z
    y = (vs - intrinsics.cy) / intrinsics.fy * z
    pts = np.stack([x, y, z], axis=-1)
    return pts @ pose[:3, :3].T + pose[:3, 3]


def extract_detections(
    rgb: np.ndarray,
    depth: np.ndarray,
    mask: np.ndarray,
    frame_id: int,
    intrinsics: CameraIntrinsics,
    pose: np.ndarray,
    classes: dict[int, int],
    cfg: AssociationConfig,
) -> list[Detection]:
    """Per-instance masks lifted to trimmed 3D boxes.

    Instances with fewer than ``min_pixels`` valid-depth pixels are dropped
    (too little geometry to bound).  The 2D bbox covers the whole mask; the
    3D box is built from valid-depth pixels only, with a small per-axis
    quantile trim against depth speckle.
    """
    if pose is None:
        raise ValueError(f"frame {frame_id} has no pose; cannot lift detections")
    ids = np.unique(mask)
    out = []
    for inst_id in ids:
        if inst_id == 0:
            continue
        m = mask == inst_id
        valid = m & (depth > 0)
        n_valid = int(valid.sum())
        if n_valid < cfg.min_pixels:
            continue
        vs, us = np.nonzero(m)
        u0, u1 = int(us.min()), int(us.max()) + 1
        v0, v1 = int(vs.min()), int(vs.max()) + 1
        vv, uu = np.nonzero(valid)
        pts = backproject(uu.astype(np.float64), vv.astype(np.float64), depth[vv, uu], intrinsics, pose)
        box = AABB.from_points(pts, trim=cfg.outlier_trim)
        out.append(
            Detection(
                frame_id=frame_id,
                semantic_class=int(classes.get(int(inst_id), 1)),
                bbox=(u0, v0, u1, v1),
                n_pixels=n_valid,
                mask=m[v0:v1, u0:u1],
                aabb=box,
            )
        )
    return out


def scene_bounds(depth: np.ndarray, intrinsics: CameraIntrinsics, pose: np.ndarray,
                 stride: int = 4, trim: float = 0.01) -> AABB | None:
    """Box around all valid depth in a frame, subsampled for speed."""
    d = depth[::stride, ::stride]
    vs, us = np.nonzero(d > 0)
    if vs.size < 16:
        return None
    pts = backproject(
        (us * stride).astype(np.float64), (vs * stride).astype(np.float64), d[vs, us], intrinsics, pose
    )
    return AABB.from_points(pts, trim=trim)


def associate(
    detections: list[Detection], object_map: ObjectMap, cfg: AssociationConfig
) -> list[int | None]:
    """Greedy one-to-one matching of detections to existing objects.

    A pair is a candidate when semantic classes match and the 3D IoU between
    the detection box and the object's running box reaches the threshold.
    Pairs are taken in descending IoU order (ties: lower object id, then lower
    detection index); unmatched detections return None and become new objects.
    """
    candidates = []
    for det_idx, det in enumerate(detections):
        for inst in object_map.objects():
            if inst.semantic_class != det.semantic_class:
                continue
            iou = aabb_iou(det.aabb, inst.aabb)
            if iou >= cfg.iou_threshold:
                candidates.append((-iou, inst.object_id, det_idx))
    candidates.sort()
    assigned: list[int | None] = [None] * len(detections)
    used_objects: set[int] = set()
    for neg_iou, obj_id, det_idx in candidates:
        if assigned[det_idx] is not None or obj_id in used_objects:
            continue
        assigned[det_idx] = obj_id
        used_objects.add(obj_id)
    return assigned


def update_bounds(inst: ObjectInstance, det_aabb: AABB) -> None:
    """Grow the instance's box to cover a new detection (never shrinks)."""
    inst.aabb = inst.aabb.union(det_aabb)


def keyframe_due(inst: ObjectInstance, cfg: AssociationConfig) -> bool:
    """Whether the current observation should be stored as a keyframe.

    Counting is per object: the first observation is always kept, then every
    stride-th one.  ``obs_count`` must already include the current
    observation.
    """
    if inst.obs_count < 1:
        raise ValueError("keyframe_due called before the observation was counted")
    stride = cfg.keyframe_stride_background if inst.is_background else cfg.keyframe_stride_object
    return (inst.obs_count - 1) % stride == 0


def dilate_bbox(
    bbox: tuple[int, int, int, int],
    mask: np.ndarray,
    margin: int,
    image_shape: tuple[int, int],
) -> tuple[tuple[int, int, int, int], np.ndarray]:
    """Grow a tight mask bbox by ``margin`` pixels, clipped to the image.

    Returns the grown (half-open) bbox and the mask crop re-padded to its
    size.  The padding is False everywhere: a tight bbox contains every mask
    pixel, so the added border is off-mask by construction.
    """
    h, w = image_shape
    u0, v0, u1, v1 = bbox
    nu0, nv0 = max(u0 - margin, 0), max(v0 - margin, 0)
    nu1, nv1 = min(u1 + margin, w), min(v1 + margin, h)
    grown = np.zeros((nv1 - nv0, nu1 - nu0), dtype=bool)
    grown[v0 - nv0 : v1 - nv0, u0 - nu0 : u1 - nu0] = mask
    return (nu0, nv0, nu1, nv1), grown


def add_keyframe(
    inst: ObjectInstance,
    frame_id: int,
    pose: np.ndarray,
    bbox: tuple[int, int, int, int],
    mask: np.ndarray,
    rgb: np.ndarray,
    depth: np.ndarray,
) -> Keyframe:
    u0, v0, u1, v1 = bbox
    kf = Keyframe(
        frame_id=frame_id,
        pose=np.asarray(pose, dtype=np.float64).copy(),
        bbox=bbox,
        mask=np.asarray(mask, bool).copy(),
        rgb=np.asarray(rgb[v0:v1, u0:u1], dtype=np.float32).copy(),
        depth=np.asarray(depth[v0:v1, u0:u1], dtype=np.float32).copy(),
    )
    inst.keyframes.append(kf)
    return kf


def sample_training_pixels(
    inst: ObjectInstance, seed: int, step: int, n_rays: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Uniform pixel draws inside keyframe bboxes for one training step.

    Returns (keyframe_index, u, v, in_mask) each of length n_rays.  Pixels
    are drawn uniformly over each chosen keyframe's bbox so off-mask rays
    around the silhouette supervise empty space.  The stream is keyed by
    (seed, object id, step): independent of any other object's draws.
    """
    if not inst.keyframes:
        raise ValueError(f"object {inst.object_id} has no keyframes to sample from")
    rng = keyed_rng(seed, PURPOSE_PIXELS, inst.object_id, step)
    kf_idx = rng.integers(0, len(inst.keyframes), size=n_rays)
    uv = rng.random((n_rays, 2))
    u = np.empty(n_rays, dtype=np.int64)
    v = np.empty(n_rays, dtype=np.int64)
    in_mask = np.empty(n_rays, dtype=bool)
    for k in np.unique(kf_idx):
        sel = kf_idx == k
        kf = inst.keyframes[int(k)]
        u0, v0, u1, v1 = kf.bbox
        uu = u0 + np.floor(uv[sel, 0] * (u1 - u0)).astype(np.int64)
        vv = v0 + np.floor(uv[sel, 1] * (v1 - v0)).astype(np.int64)
        uu = np.minimum(uu, u1 - 1)
        vv = np.minimum(vv, v1 - 1)
        u[sel] = uu
        v[sel] = vv
        in_mask[sel] = kf.mask[vv - v0, uu - u0]
    return kf_idx, u, v, in_mask
