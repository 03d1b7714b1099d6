"""Procedural RGB-D sequences with exact poses, masks and GT meshes.

Scenes are a handful of analytic primitives (sphere, box, z-aligned cylinder)
inside an optional room shell, ray-traced at full resolution with flat albedo
plus a fixed directional light.  Everything downstream of the camera model is
exact, so the generator doubles as the geometric oracle for the mapper tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vobj.datasets import Dataset, save_frame_images, write_intrinsics_file, write_pose_file
from vobj.geometry import look_at
from vobj.meshing import Mesh, write_ply
from vobj.render import CameraIntrinsics, camera_dirs
from vobj.rng import PURPOSE_SYNTH, keyed_rng

_LIGHT = np.array([0.4, 0.25, 0.85]) / np.linalg.norm([0.4, 0.25, 0.85])
_AMBIENT = 0.55
_DIFFUSE = 0.45
_EPS = 1e-6


@dataclass
class Primitive:
    kind: str  # sphere | box | cylinder
    center: tuple[float, float, float]
    size: tuple[float, ...]  # sphere: (r,); box: half extents; cylinder: (r, half_h)
    albedo: tuple[float, float, float]
    semantic_class: int = 1

    def __post_init__(self):
        expected = {"sphere": 1, "box": 3, "cylinder": 2}
        if self.kind not in expected:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if len(self.size) != expected[self.kind]:
            raise ValueError(f"{self.kind} takes {expected[self.kind]} size values, got {self.size}")
        if any(s <= 0 for s in self.size):
            raise ValueError(f"primitive sizes must be positive, got {self.size}")

    def contains(self, p: np.ndarray) -> bool:
        c = np.asarray(self.center)
        if self.kind == "sphere":
            return bool(np.linalg.norm(p - c) < self.size[0])
        if self.kind == "box":
            return bool(np.all(np.abs(p - c) < np.asarray(self.size)))
        r, hh = self.size
        d = p - c
        return bool(d[0] ** 2 + d[1] ** 2 < r**2 and abs(d[2]) < hh)


@dataclass
class OrbitTrajectory:
    center: tuple[float, float, float]
    radius: float
    z_min: float
    z_max: float
    target: tuple[float, float, float]
    turns: float = 2.0
    z_cycles: float = 2.0
    phase: float = 0.0

    def poses(self, n_frames: int) -> list[np.ndarray]:
        if n_frames < 1:
            raise ValueError("trajectory needs at least one frame")
        out = []
        for i in range(n_frames):
            s = i / max(n_frames - 1, 1)
            ang = self.phase + 2.0 * np.pi * self.turns * s
            z = self.z_min + (self.z_max - self.z_min) * 0.5 * (
                1.0 - np.cos(2.0 * np.pi * self.z_cycles * s)
            )
            eye = np.array(
                [
                    self.center[0] + self.radius * np.cos(ang),
                    self.center[1] + self.radius * np.sin(ang),
                    z,
                ]
            )
            out.append(look_at(eye, np.asarray(self.target)))
        return out


@dataclass
class SceneSpec:
    name: str
    primitives: list[Primitive]
    trajectory: OrbitTrajectory
    n_frames: int
    width: int = 320
    height: int = 240
    focal: float = 240.0
    room_center: tuple[float, float, float] | None = None
    room_half: tuple[float, float, float] | None = None
    wall_albedo: tuple[float, float, float] = (0.72, 0.72, 0.70)
    depth_scale: float = 1000.0
    depth_noise_std: float = 0.0
    permute_mask_ids: bool = False

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal, fy=self.focal, cx=self.width / 2.0, cy=self.height / 2.0,
            width=self.width, height=self.height,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_frames": self.n_frames,
            "width": self.width,
            "height": self.height,
            "focal": self.focal,
            "room_center": self.room_center,
            "room_half": self.room_half,
            "wall_albedo": self.wall_albedo,
            "depth_scale": self.depth_scale,
            "depth_noise_std": self.depth_noise_std,
            "permute_mask_ids": self.permute_mask_ids,
            "primitives": [
                {
                    "kind": p.kind, "center": p.center, "size": p.size,
                    "albedo": p.albedo, "semantic_class": p.semantic_class,
                }
                for p in self.primitives
            ],
            "trajectory": {
                "center": self.trajectory.center, "radius": self.trajectory.radius,
                "z_min": self.trajectory.z_min, "z_max": self.trajectory.z_max,
                "target": self.trajectory.target, "turns": self.trajectory.turns,
                "z_cycles": self.trajectory.z_cycles, "phase": self.trajectory.phase,
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        prims = [
            Primitive(
                kind=p["kind"], center=tuple(p["center"]), size=tuple(p["size"]),
                albedo=tuple(p["albedo"]), semantic_class=int(p.get("semantic_class", 1)),
            )
            for p in d["primitives"]
        ]
        t = d["trajectory"]
        traj = OrbitTrajectory(
            center=tuple(t["center"]), radius=float(t["radius"]),
            z_min=float(t["z_min"]), z_max=float(t["z_max"]), target=tuple(t["target"]),
            turns=float(t.get("turns", 2.0)), z_cycles=float(t.get("z_cycles", 2.0)),
            phase=float(t.get("phase", 0.0)),
        )
        return SceneSpec(
            name=d.get("name", "scene"),
            primitives=prims,
            trajectory=traj,
            n_frames=int(d["n_frames"]),
            width=int(d.get("width", 320)),
            height=int(d.get("height", 240)),
            focal=float(d.get("focal", 240.0)),
            room_center=tuple(d["room_center"]) if d.get("room_center") else None,
            room_half=tuple(d["room_half"]) if d.get("room_half") else None,
            wall_albedo=tuple(d.get("wall_albedo", (0.72, 0.72, 0.70))),
            depth_scale=float(d.get("depth_scale", 1000.0)),
            depth_noise_std=float(d.get("depth_noise_std", 0.0)),
            permute_mask_ids=bool(d.get("permute_mask_ids", False)),
        )


def _sphere_hits(o: np.ndarray, d: np.ndarray, center, radius) -> np.ndarray:
    oc = o - np.asarray(center)
    b = d @ oc
    c0 = oc @ oc - radius * radius
    disc = b * b - c0
    t = np.full(d.shape[0], np.inf)
    m = disc > 0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = -b - sq
    t2 = -b + sq
    cand = np.where(t1 > _EPS, t1, np.where(t2 > _EPS, t2, np.inf))
    t[m] = cand[m]
    return t


def _box_hits(o: np.ndarray, d: np.ndarray, center, half) -> np.ndarray:
    lo = np.asarray(center) - np.asarray(half)
    hi = np.asarray(center) + np.asarray(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        ta = (lo - o) * inv
        tb = (hi - o) * inv
    par = d == 0
    if par.any():
        inside = (o >= lo) & (o <= hi)
        ta = np.where(par, np.where(inside, -np.inf, np.inf), ta)
        tb = np.where(par, np.where(inside, np.inf, -np.inf), tb)
    near = np.minimum(ta, tb).max(axis=-1)
    far = np.maximum(ta, tb).min(axis=-1)
    t = np.where((near > _EPS) & (near <= far), near, np.inf)
    return t


def _box_exit(o: np.ndarray, d: np.ndarray, center, half) -> np.ndarray:
    lo = np.asarray(center) - np.asarray(half)
    hi = np.asarray(center) + np.asarray(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        ta = (lo - o) * inv
        tb = (hi - o) * inv
    par = d == 0
    if par.any():
        ta = np.where(par, -np.inf, ta)
        tb = np.where(par, np.inf, tb)
    return np.maximum(ta, tb).min(axis=-1)


def _cylinder_hits(o: np.ndarray, d: np.ndarray, center, radius, half_h) -> np.ndarray:
    c = np.asarray(center)
    ox, oy, oz = o[0] - c[0], o[1] - c[1], o[2] - c[2]
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    best = np.full(d.shape[0], np.inf)
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c0 = ox * ox + oy * oy - radius * radius
    disc = b * b - a * c0
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / a
            z = oz + t * dz
            valid = (disc > 0) & (a > 0) & (t > _EPS) & (np.abs(z) <= half_h)
            best = np.where(valid & (t < best), t, best)
        for cap_z in (-half_h, half_h):
            t = (cap_z - oz) / dz
            px = ox + t * dx
            py = oy + t * dy
            valid = (dz != 0) & (t > _EPS) & (px * px + py * py <= radius * radius)
            best = np.where(valid & (t < best), t, best)
    return best


def _primitive_hits(prim: Primitive, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    if prim.kind == "sphere":
        return _sphere_hits(o, d, prim.center, prim.size[0])
    if prim.kind == "box":
        return _box_hits(o, d, prim.center, prim.size)
    return _cylinder_hits(o, d, prim.center, prim.size[0], prim.size[1])


def _primitive_normal(prim: Primitive, p: np.ndarray) -> np.ndarray:
    c = np.asarray(prim.center)
    if prim.kind == "sphere":
        n = p - c
        return n / np.linalg.norm(n, axis=-1, keepdims=True)
    if prim.kind == "box":
        rel = (p - c) / np.asarray(prim.size)
        axis = np.argmax(np.abs(rel), axis=-1)
        n = np.zeros_like(p)
        n[np.arange(p.shape[0]), axis] = np.sign(rel[np.arange(p.shape[0]), axis])
        return n
    radius, half_h = prim.size
    rel = p - c
    n = np.zeros_like(p)
    on_cap = np.abs(np.abs(rel[:, 2]) - half_h) < 1e-6
    n[on_cap, 2] = np.sign(rel[on_cap, 2])
    side = ~on_cap
    nx = rel[side, :2]
    n[side, :2] = nx / np.linalg.norm(nx, axis=-1, keepdims=True)
    return n


def _shade(albedo: np.ndarray, normals: np.ndarray) -> np.ndarray:
    lam = np.maximum(normals @ _LIGHT, 0.0)
    return np.clip(albedo * (_AMBIENT + _DIFFUSE * lam)[:, None], 0.0, 1.0)


def render_scene_frame(
    spec: SceneSpec, pose: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact RGB (float [0,1]), z-depth (metres) and instance-id images.

    Mask ids are the canonical primitive index + 1; id permutation and depth
    noise are applied by the writer, not here, so tests can use this as the
    noise-free oracle.
    """
    intr = spec.intrinsics
    w, h = spec.width, spec.height
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    pix = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float64)
    d_cam = camera_dirs(pix, intr)
    scale = np.linalg.norm(d_cam, axis=-1)
    dirs = (d_cam / scale[:, None]) @ pose[:3, :3].T
    origin = pose[:3, 3]

    eye_clear(spec, origin)

    n_rays = dirs.shape[0]
    best_t = np.full(n_rays, np.inf)
    hit_id = np.zeros(n_rays, dtype=np.int32)  # 0 = background/room
    for i, prim in enumerate(spec.primitives):
        t = _primitive_hits(prim, origin, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        hit_id = np.where(closer, i + 1, hit_id)

    if spec.room_half is not None:
        t_room = _box_exit(origin, dirs, spec.room_center, spec.room_half)
        room_pix = ~np.isfinite(best_t)
        best_t = np.where(room_pix, t_room, best_t)

    valid = np.isfinite(best_t) & (best_t > 0)
    rgb = np.zeros((n_rays, 3))
    points = origin + np.where(valid, best_t, 0.0)[:, None] * dirs
    for i, prim in enumerate(spec.primitives):
        sel = (hit_id == i + 1) & valid
        if sel.any():
            n = _primitive_normal(prim, points[sel])
            rgb[sel] = _shade(np.asarray(prim.albedo), n)
    room_sel = (hit_id == 0) & valid
    if spec.room_half is not None and room_sel.any():
        rel = (points[room_sel] - np.asarray(spec.room_center)) / np.asarray(spec.room_half)
        axis = np.argmax(np.abs(rel), axis=-1)
        n = np.zeros((room_sel.sum(), 3))
        n[np.arange(n.shape[0]), axis] = -np.sign(rel[np.arange(n.shape[0]), axis])
        # Slight per-face tint so opposing walls are distinguishable.
        tint = 1.0 - 0.06 * axis[:, None] / 2.0
        rgb[room_sel] = np.clip(_shade(np.asarray(spec.wall_albedo), n) * tint, 0.0, 1.0)

    z = np.where(valid, best_t / np.maximum(scale, _EPS), 0.0)
    mask = np.where(valid, hit_id, 0).astype(np.int32)
    mask = np.where(z > 0, mask, 0)
    return (
        rgb.reshape(h, w, 3),
        z.reshape(h, w),
        mask.reshape(h, w),
    )


def eye_clear(spec: SceneSpec, eye: np.ndarray) -> None:
    for i, prim in enumerate(spec.primitives):
        if prim.contains(eye):
            raise ValueError(f"camera at {eye} is inside primitive {i} ({prim.kind})")
    if spec.room_half is not None:
        lo = np.asarray(spec.room_center) - np.asarray(spec.room_half)
        hi = np.asarray(spec.room_center) + np.asarray(spec.room_half)
        if np.any(eye <= lo) or np.any(eye >= hi):
            raise ValueError(f"camera at {eye} is outside the room shell")


def icosphere(center, radius: float, subdivisions: int = 4) -> Mesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}
        v_list = list(verts)

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = v_list[a] + v_list[b]
                m /= np.linalg.norm(m)
                cache[key] = len(v_list)
                v_list.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.asarray(v_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return Mesh(verts * radius + np.asarray(center), faces)


def box_mesh(center, half, invert: bool = False) -> Mesh:
    c = np.asarray(center, dtype=np.float64)
    h = np.asarray(half, dtype=np.float64)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64
    )
    verts = c + corners * h
    faces = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 7], [1, 7, 3],  # +z
        ],
        dtype=np.int64,
    )
    if invert:
        faces = faces[:, ::-1]
    return Mesh(verts, faces)


def cylinder_mesh(center, radius: float, half_h: float, segments: int = 96) -> Mesh:
    c = np.asarray(center, dtype=np.float64)
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.concatenate([ring, np.full((segments, 1), -half_h)], axis=1)
    top = np.concatenate([ring, np.full((segments, 1), half_h)], axis=1)
    verts = np.concatenate([bottom, top, [[0, 0, -half_h]], [[0, 0, half_h]]]) + c
    faces = []
    bc, tc = 2 * segments, 2 * segments + 1
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + i], [j, segments + j, segments + i]]
        faces += [[bc, j, i], [tc, segments + i, segments + j]]
    return Mesh(verts, np.asarray(faces, dtype=np.int64))


def primitive_mesh(prim: Primitive) -> Mesh:
    if prim.kind == "sphere":
        return icosphere(prim.center, prim.size[0])
    if prim.kind == "box":
        return box_mesh(prim.center, prim.size)
    return cylinder_mesh(prim.center, prim.size[0], prim.size[1])


def _class_preserving_permutation(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Shuffle primitive->mask-id assignment within each semantic class.

    Keeping the shuffle class-local means a static id->class table stays
    valid for every frame, the way a real detector reports a class per mask.
    """
    n = len(spec.primitives)
    perm = np.arange(n)
    classes = np.array([p.semantic_class for p in spec.primitives])
    for cls in np.unique(classes):
        idx = np.flatnonzero(classes == cls)
        perm[idx] = idx[rng.permutation(idx.size)]
    return perm


def generate(spec: SceneSpec, out_root, seed: int = 0) -> Dataset:
    """Write a full dataset for the scene and return it loaded."""
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    poses = spec.trajectory.poses(spec.n_frames)
    write_intrinsics_file(root, spec.intrinsics, spec.depth_scale)
    write_pose_file(root, poses)
    (root / "classes.txt").write_text(
        "".join(f"{i + 1} {p.semantic_class}\n" for i, p in enumerate(spec.primitives))
    )

    for fi, pose in enumerate(poses):
        rgb, z, mask = render_scene_frame(spec, pose)
        if spec.depth_noise_std > 0:
            noise_rng = keyed_rng(seed, PURPOSE_SYNTH, fi, 0)
            noisy = z + noise_rng.normal(0.0, spec.depth_noise_std, z.shape)
            z = np.where(z > 0, np.maximum(noisy, 2.0 / spec.depth_scale), 0.0)
        if spec.permute_mask_ids:
            perm_rng = keyed_rng(seed, PURPOSE_SYNTH, fi, 1)
            perm = _class_preserving_permutation(spec, perm_rng)
            remap = np.zeros(len(spec.primitives) + 1, dtype=np.int32)
            remap[1:] = perm + 1
            mask = remap[mask]
        depth_u16 = np.clip(np.round(z * spec.depth_scale), 0, 65535).astype(np.uint16)
        rgb_u8 = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
        save_frame_images(root, fi, rgb_u8, depth_u16, mask.astype(np.uint16))

    mesh_dir = root / "gt_mesh"
    mesh_dir.mkdir(exist_ok=True)
    instances = {}
    for i, prim in enumerate(spec.primitives):
        rel = f"gt_mesh/instance_{i + 1:03d}.ply"
        write_ply(root / rel, primitive_mesh(prim))
        instances[str(i + 1)] = {"class": prim.semantic_class, "kind": prim.kind, "mesh": rel}
    manifest = {
        "temporally_consistent_masks": not spec.permute_mask_ids,
        "n_frames": spec.n_frames,
        "depth_scale": spec.depth_scale,
        "instances": instances,
        "scene": spec.to_dict(),
    }
    if spec.room_half is not None:
        write_ply(mesh_dir / "background.ply", box_mesh(spec.room_center, spec.room_half, invert=True))
        manifest["background_mesh"] = "gt_mesh/background.ply"
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return Dataset(root)


def five_object_scene(
    n_frames: int = 200,
    width: int = 640,
    height: int = 480,
    permute_mask_ids: bool = False,
    depth_noise_std: float = 0.0,
) -> SceneSpec:
    """Reference scene: five same-class primitives in a small room.

    Because the camera orbit keeps height locked to azimuth (turns equal
    z-cycles), every pair of objects lines up with the camera at just two
    recurring view geometries.  The placement below was searched so that at
    every such event the two silhouettes stay disjoint by a margin of more
    than the far object's angular radius: deep occlusions would leave a
    sliver detection whose 3D box falls below the association IoU threshold
    and spawns a duplicate instance.  Every object floats clear of the floor
    so grazing rays carve the space beneath it.
    """
    prims = [
        Primitive("box", (0.768, 0.681, 1.060), (0.13, 0.11, 0.10), (0.80, 0.25, 0.75)),
        Primitive("cylinder", (-0.839, 0.522, 0.413), (0.10, 0.13), (0.15, 0.70, 0.25)),
        Primitive("sphere", (-0.470, -0.939, 0.401), (0.14,), (0.85, 0.20, 0.15)),
        Primitive("cylinder", (0.074, -0.627, 0.780), (0.11, 0.12), (0.20, 0.35, 0.85)),
        Primitive("sphere", (0.722, -0.343, 0.200), (0.13,), (0.90, 0.80, 0.15)),
    ]
    traj = OrbitTrajectory(
        center=(0.0, 0.0, 0.0), radius=2.6, z_min=0.45, z_max=1.35,
        target=(0.0, 0.0, 0.55), turns=2.0, z_cycles=2.0,
    )
    return SceneSpec(
        name="five_objects",
        primitives=prims,
        trajectory=traj,
        n_frames=n_frames,
        width=width,
        height=height,
        focal=480.0,
        room_center=(0.0, 0.0, 1.05),
        room_half=(3.0, 3.0, 1.15),
        permute_mask_ids=permute_mask_ids,
        depth_noise_std=depth_noise_std,
    )


def hemisphere_sphere_scene(n_frames: int = 80, width: int = 320, height: int = 240) -> SceneSpec:
    """A single sphere seen only from above its equator.

    Camera elevation spans roughly 8-40 degrees, so the polar cap below
    z = c_z - r*cos(8deg) is never observed directly.  The shallowest rays
    passing the silhouette cross the sphere's axis at z = c_z - r/cos(8deg),
    only ~2.6 mm below the south pole, which is what bounds how far off the
    hole-filled closure can sit.
    """
    prims = [Primitive("sphere", (0.0, 0.0, 0.62), (0.25,), (0.85, 0.30, 0.20))]
    traj = OrbitTrajectory(
        center=(0.0, 0.0, 0.0), radius=1.25, z_min=0.80, z_max=1.65,
        target=(0.0, 0.0, 0.62), turns=2.0, z_cycles=2.0,
    )
    return SceneSpec(
        name="hemisphere_sphere",
        primitives=prims,
        trajectory=traj,
        n_frames=n_frames,
        width=width,
        height=height,
        room_center=(0.0, 0.0, 1.0),
        room_half=(1.6, 1.6, 1.1),
    )


def mini_scene(n_frames: int = 16, width: int = 160, height: int = 120,
               permute_mask_ids: bool = False) -> SceneSpec:
    """Two small objects, low resolution; for fast tests."""
    prims = [
        Primitive("sphere", (0.45, 0.0, 0.5), (0.17,), (0.85, 0.25, 0.15)),
        Primitive("box", (-0.45, 0.1, 0.45), (0.15, 0.13, 0.14), (0.15, 0.65, 0.30)),
    ]
    traj = OrbitTrajectory(
        center=(0.0, 0.0, 0.0), radius=1.45, z_min=0.55, z_max=1.35,
        target=(0.0, 0.0, 0.45), turns=1.0, z_cycles=1.0,
    )
    return SceneSpec(
        name="mini",
        primitives=prims,
        trajectory=traj,
        n_frames=n_frames,
        width=width,
        height=height,
        focal=130.0,
        room_center=(0.0, 0.0, 0.95),
        room_half=(1.6, 1.6, 1.05),
        permute_mask_ids=permute_mask_ids,
    )
