"""Mapping loop: frame ingestion, batch assembly, batched/sequential training.

The vectorised step stacks every object's ray batch along a leading model
axis and runs one forward/backward/update for all K models.  The sequential
step is the same mathematics one model at a time; it exists as the
correctness oracle and the benchmark baseline.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vobj import meshing
from vobj.checkpoint import load_checkpoint, save_checkpoint
from vobj.datasets import Dataset, Frame
from vobj.models import (
    ModelArch,
    OptimState,
    StackedModelParams,
    adam_step,
    append_model,
    backward,
    forward,
    init_stacked,
    positional_encode,
    set_frozen,
)
from vobj.objects import (
    AssociationConfig,
    ObjectInstance,
    ObjectMap,
    add_keyframe,
    associate,
    dilate_bbox,
    extract_detections,
    keyframe_due,
    sample_training_pixels,
    scene_bounds,
    update_bounds,
)
from vobj.render import (
    CameraIntrinsics,
    LossWeights,
    SamplingConfig,
    camera_dirs,
    compute_losses,
    loss_output_grads,
    ray_box_intersect,
    render_backward,
    render_rays,
    sample_along_rays,
)
from vobj.rng import PURPOSE_BENCH, PURPOSE_INIT_BACKGROUND, PURPOSE_INIT_OBJECT, PURPOSE_SAMPLES, keyed_rng


@dataclass
class TrainConfig:
    seed: int = 0
    steps_per_frame: int = 10
    rays_per_object: int = 120
    rays_background: int = 1200
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    association: AssociationConfig = field(default_factory=AssociationConfig)
    arch_object: ModelArch = field(default_factory=lambda: ModelArch(n_layers=4, hidden=32, n_freq=5))
    arch_background: ModelArch = field(default_factory=lambda: ModelArch(n_layers=4, hidden=128, n_freq=5))
    pe_scale_object: float = 10.0
    pe_scale_background: float = 15.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    train_background: bool = True
    max_frames: int | None = None
    mesh_resolution_object: int = 64
    mesh_resolution_scene: int = 256
    eval_samples_background: int = 48
    eval_samples_object: int = 48

    def __post_init__(self):
        for name in ("steps_per_frame", "rays_per_object", "rays_background"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def points_per_ray(self) -> int:
        return self.sampling.n_points


_CONFIG_SECTIONS = {
    "sampling": SamplingConfig,
    "loss_weights": LossWeights,
    "association": AssociationConfig,
    "arch_object": ModelArch,
    "arch_background": ModelArch,
}


def _coerce(text: str, target_type) -> object:
    if target_type is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text


def apply_config_overrides(cfg: TrainConfig, overrides: dict[str, str]) -> TrainConfig:
    """New config with dotted key=value overrides applied, e.g. sampling.t_far=6."""
    updates: dict[str, object] = {}
    section_updates: dict[str, dict[str, object]] = {}
    base_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    for key, raw in overrides.items():
        if "." in key:
            section, sub = key.split(".", 1)
            if section not in _CONFIG_SECTIONS:
                raise KeyError(f"unknown config section {section!r}")
            sub_fields = {f.name: f for f in dataclasses.fields(_CONFIG_SECTIONS[section])}
            if sub not in sub_fields:
                raise KeyError(f"unknown config key {key!r}")
            anno = sub_fields[sub].type
            ftype = {"int": int, "float": float, "bool": bool, "str": str}.get(str(anno), None)
            if ftype is None:
                ftype = type(getattr(getattr(cfg, section), sub))
            section_updates.setdefault(section, {})[sub] = _coerce(raw, ftype)
        else:
            if key not in base_fields:
                raise KeyError(f"unknown config key {key!r}")
            current = getattr(cfg, key)
            ftype = int if key == "max_frames" else type(current)
            updates[key] = _coerce(raw, ftype)
    for section, subs in section_updates.items():
        updates[section] = dataclasses.replace(getattr(cfg, section), **subs)
    return dataclasses.replace(cfg, **updates)


def load_config_file(path, base: TrainConfig | None = None) -> TrainConfig:
    """Parse `key = value` lines (dots for nesting, # comments) over defaults."""
    cfg = base if base is not None else TrainConfig()
    overrides = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines()):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno + 1}: expected key = value")
        key, val = stripped.split("=", 1)
        overrides[key.strip()] = val.strip()
    return apply_config_overrides(cfg, overrides)


@dataclass
class RaySampleBatch:
    """Everything one model needs for a training step, rays stacked on axis 0."""

    encoded: np.ndarray  # [R, S, input_dim] float32
    t: np.ndarray  # [R, S] float32, sorted along-ray distances
    target_depth: np.ndarray  # [R] float32, along-ray
    target_colour: np.ndarray  # [R, 3] float32
    target_mask: np.ndarray  # [R] bool
    valid_depth: np.ndarray  # [R] bool
    ray_ok: np.ndarray  # [R] bool
    has_rays: bool


@dataclass
class StepReport:
    step: int
    frame_id: int
    k_models: int
    losses: dict[int, tuple[float, float, float]]  # object_id -> (L_depth, L_colour, L_occ)
    total: float
    ms: float

    @staticmethod
    def csv_header() -> str:
        return "step,frame,k,object_id,l_depth,l_colour,l_occ,total,ms"


def _zero_batch(n_rays: int, n_points: int, input_dim: int) -> RaySampleBatch:
    return RaySampleBatch(
        encoded=np.zeros((n_rays, n_points, input_dim), dtype=np.float32),
        t=np.zeros((n_rays, n_points), dtype=np.float32),
        target_depth=np.zeros(n_rays, dtype=np.float32),
        target_colour=np.zeros((n_rays, 3), dtype=np.float32),
        target_mask=np.zeros(n_rays, dtype=bool),
        valid_depth=np.zeros(n_rays, dtype=bool),
        ray_ok=np.zeros(n_rays, dtype=bool),
        has_rays=False,
    )


class Mapper:
    """Owns the object map and both model stacks; processes frames and trains."""

    def __init__(self, intrinsics: CameraIntrinsics, cfg: TrainConfig | None = None):
        self.cfg = cfg if cfg is not None else TrainConfig()
        self.intrinsics = intrinsics
        self.map = ObjectMap()
        c = self.cfg
        self.obj_params, self.obj_state = init_stacked(
            c.arch_object, 0, c.seed, PURPOSE_INIT_OBJECT,
            lr=c.lr, beta1=c.beta1, beta2=c.beta2, eps=c.eps,
        )
        self.bg_params, self.bg_state = init_stacked(
            c.arch_background, 0, c.seed, PURPOSE_INIT_BACKGROUND,
            lr=c.lr, beta1=c.beta1, beta2=c.beta2, eps=c.eps,
        )
        self.model_to_object: list[int] = []  # object-stack index -> object id
        self.global_step = 0
        self.frames_seen = 0
        self.last_frame_id = -1

    # ---------------- frame ingestion ----------------

    def process_frame(self, frame: Frame, classes: dict[int, int] | None = None) -> None:
        cfg = self.cfg
        acfg = cfg.association
        classes = classes if classes is not None else {}

        bounds = scene_bounds(frame.depth, self.intrinsics, frame.pose)
        bg = self.map.background
        if bg is None:
            if bounds is None:
                raise ValueError(f"frame {frame.frame_id}: no valid depth to bound the scene")
            idx = append_model(self.bg_params, self.bg_state, cfg.seed, PURPOSE_INIT_BACKGROUND)
            bg = self.map.add_background(bounds, cfg.pe_scale_background, idx)
        elif bounds is not None:
            update_bounds(bg, bounds)
        bg.obs_count += 1
        if keyframe_due(bg, acfg):
            h, w = frame.depth.shape
            add_keyframe(
                bg, frame.frame_id, frame.pose, (0, 0, w, h), frame.mask == 0, frame.rgb, frame.depth
            )

        detections = extract_detections(
            frame.rgb, frame.depth, frame.mask, frame.frame_id,
            self.intrinsics, frame.pose, classes, acfg,
        )
        assignments = associate(detections, self.map, acfg)
        for det, assigned in zip(detections, assignments):
            if assigned is None:
                model_index = append_model(self.obj_params, self.obj_state, cfg.seed, PURPOSE_INIT_OBJECT)
                inst = self.map.add_object(det.semantic_class, det.aabb, cfg.pe_scale_object, model_index)
                self.model_to_object.append(inst.object_id)
            else:
                inst = self.map.instances[assigned]
                update_bounds(inst, det.aabb)
            inst.obs_count += 1
            if keyframe_due(inst, acfg):
                bbox, mask = dilate_bbox(det.bbox, det.mask, acfg.bbox_margin_px, frame.depth.shape)
                add_keyframe(inst, frame.frame_id, frame.pose, bbox, mask, frame.rgb, frame.depth)
        self.frames_seen += 1
        self.last_frame_id = frame.frame_id

    # ---------------- batch assembly ----------------

    def _assemble_batch(self, inst: ObjectInstance, n_rays: int, step: int) -> RaySampleBatch:
        cfg = self.cfg
        arch = self.bg_params.arch if inst.is_background else self.obj_params.arch
        if not inst.keyframes or not inst.active:
            return _zero_batch(n_rays, cfg.points_per_ray, arch.input_dim)
        kf_idx, us, vs, in_mask = sample_training_pixels(inst, cfg.seed, step, n_rays)

        colour = np.empty((n_rays, 3), dtype=np.float64)
        depth_z = np.empty(n_rays, dtype=np.float64)
        poses = np.empty((n_rays, 3, 4), dtype=np.float64)
        for k in np.unique(kf_idx):
            kf = inst.keyframes[int(k)]
            sel = kf_idx == k
            u0, v0, _, _ = kf.bbox
            ur = us[sel] - u0
            vr = vs[sel] - v0
            colour[sel] = kf.rgb[vr, ur]
            depth_z[sel] = kf.depth[vr, ur]
            poses[sel] = kf.pose[:3, :]

        pix = np.stack([us, vs], axis=1).astype(np.float64)
        d_cam = camera_dirs(pix, self.intrinsics)
        scale = np.linalg.norm(d_cam, axis=-1)
        dirs = np.einsum("rij,rj->ri", poses[:, :, :3], d_cam)
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        origins = poses[:, :, 3]

        valid = depth_z > 0
        surface_t = depth_z * scale

        box = inst.padded_aabb(cfg.association.bound_pad)
        t0, t1, hit = ray_box_intersect(origins, dirs, box)
        near = np.where(hit, np.maximum(t0, cfg.sampling.t_near), cfg.sampling.t_near)
        far = np.where(hit & (t1 > near), t1, cfg.sampling.t_far)

        rng = keyed_rng(cfg.seed, PURPOSE_SAMPLES, inst.object_id, step)
        t, ok = sample_along_rays(rng, surface_t, valid, in_mask, far, cfg.sampling, near=near)

        points = origins[:, None, :] + t[:, :, None] * dirs[:, None, :]
        enc = positional_encode(points, box.center, box.half_extent, arch, inst.pe_scale)
        return RaySampleBatch(
            encoded=enc.astype(np.float32),
            t=t.astype(np.float32),
            target_depth=surface_t.astype(np.float32),
            target_colour=colour.astype(np.float32),
            target_mask=in_mask,
            valid_depth=valid,
            ray_ok=ok,
            has_rays=bool(ok.any()),
        )

    def _stack_batches(self, batches: list[RaySampleBatch]) -> RaySampleBatch:
        return RaySampleBatch(
            encoded=np.stack([b.encoded for b in batches]),
            t=np.stack([b.t for b in batches]),
            target_depth=np.stack([b.target_depth for b in batches]),
            target_colour=np.stack([b.target_colour for b in batches]),
            target_mask=np.stack([b.target_mask for b in batches]),
            valid_depth=np.stack([b.valid_depth for b in batches]),
            ray_ok=np.stack([b.ray_ok for b in batches]),
            has_rays=any(b.has_rays for b in batches),
        )

    def _object_batches(self, step: int) -> list[RaySampleBatch]:
        out = []
        for k in range(self.obj_params.count):
            inst = self.map.instances[self.model_to_object[k]]
            if self.obj_params.frozen[k]:
                out.append(_zero_batch(self.cfg.rays_per_object, self.cfg.points_per_ray,
                                       self.obj_params.arch.input_dim))
            else:
                out.append(self._assemble_batch(inst, self.cfg.rays_per_object, step))
        return out

    def _background_batch(self, step: int) -> RaySampleBatch | None:
        if not self.cfg.train_background:
            return None
        bg = self.map.background
        if bg is None:
            return None
        if self.bg_params.frozen[bg.model_index]:
            return _zero_batch(self.cfg.rays_background, self.cfg.points_per_ray,
                               self.bg_params.arch.input_dim)
        return self._assemble_batch(bg, self.cfg.rays_background, step)

    # ---------------- training ----------------

    def train_step(self, mode: str = "vectorised") -> StepReport:
        if mode not in ("vectorised", "sequential"):
            raise ValueError(f"unknown training mode {mode!r}")
        step = self.global_step
        t_start = time.perf_counter()
        losses: dict[int, tuple[float, float, float]] = {}
        k_models = 0

        if self.obj_params.count > 0:
            batches = self._object_batches(step)
            stacked = self._stack_batches(batches)
            if mode == "vectorised":
                ld, lc, lo = train_on_batch(self.obj_params, self.obj_state, stacked, self.cfg.loss_weights)
            else:
                ld, lc, lo = train_on_batch_sequential(
                    self.obj_params, self.obj_state, stacked, self.cfg.loss_weights
                )
            for k in range(self.obj_params.count):
                oid = self.model_to_object[k]
                self._check_finite(oid, ld[k], lc[k], lo[k])
                losses[oid] = (float(ld[k]), float(lc[k]), float(lo[k]))
            k_models += self.obj_params.count

        bg_batch = self._background_batch(step)
        if bg_batch is not None:
            stacked_bg = self._stack_batches([bg_batch])
            if mode == "vectorised":
                ld, lc, lo = train_on_batch(self.bg_params, self.bg_state, stacked_bg, self.cfg.loss_weights)
            else:
                ld, lc, lo = train_on_batch_sequential(
                    self.bg_params, self.bg_state, stacked_bg, self.cfg.loss_weights
                )
            self._check_finite(0, ld[0], lc[0], lo[0])
            losses[0] = (float(ld[0]), float(lc[0]), float(lo[0]))
            k_models += 1

        w = self.cfg.loss_weights
        total = sum(d + w.colour * c + w.occupancy * o for d, c, o in losses.values())
        self.global_step += 1
        return StepReport(
            step=step,
            frame_id=self.last_frame_id,
            k_models=k_models,
            losses=losses,
            total=float(total),
            ms=(time.perf_counter() - t_start) * 1e3,
        )

    @staticmethod
    def _check_finite(object_id: int, *values: float) -> None:
        if not all(np.isfinite(v) for v in values):
            raise FloatingPointError(f"non-finite loss for object {object_id}")

    def freeze_object(self, object_id: int, frozen: bool = True) -> None:
        inst = self.map.instances[object_id]
        params = self.bg_params if inst.is_background else self.obj_params
        set_frozen(params, inst.model_index, frozen)

    def instance_for_model(self, index: int) -> ObjectInstance:
        return self.map.instances[self.model_to_object[index]]

    # ---------------- evaluation ----------------

    def render_view(self, pose: np.ndarray, **kwargs) -> meshing.RenderedView:
        """Composed novel-view render (colour, z-depth, instance ids)."""
        kwargs.setdefault("t_near", self.cfg.sampling.t_near)
        kwargs.setdefault("t_far", self.cfg.sampling.t_far)
        kwargs.setdefault("samples_object", self.cfg.eval_samples_object)
        kwargs.setdefault("samples_background", self.cfg.eval_samples_background)
        kwargs.setdefault("bound_pad", self.cfg.association.bound_pad)
        return meshing.render_view(
            self.obj_params, self.bg_params, self.map, self.intrinsics, pose, **kwargs
        )

    def extract_meshes(
        self, resolution: int | None = None, largest_component: bool = True
    ) -> dict[int, meshing.Mesh]:
        """Marching-cubes mesh per object, keyed by object id."""
        res = resolution if resolution is not None else self.cfg.mesh_resolution_object
        pad = self.cfg.association.bound_pad
        out: dict[int, meshing.Mesh] = {}
        for inst in self.map.objects():
            grid = meshing.query_grid(
                self.obj_params, inst.model_index, inst.aabb.padded(pad), inst.pe_scale, res
            )
            mesh = meshing.marching_cubes(grid)
            if largest_component and not mesh.is_empty:
                mesh = meshing.keep_largest_component(mesh)
            out[inst.object_id] = mesh
        return out

    def extract_scene_mesh(self, resolution: int | None = None) -> meshing.Mesh:
        """Background-field mesh over the scene bounds."""
        bg = self.map.background
        if bg is None:
            raise ValueError("no background instance to mesh")
        res = resolution if resolution is not None else self.cfg.mesh_resolution_scene
        box = bg.aabb.padded(self.cfg.association.bound_pad)
        grid = meshing.query_grid(self.bg_params, bg.model_index, box, bg.pe_scale, res)
        return meshing.marching_cubes(grid)

    # ---------------- persistence ----------------

    def save(self, path) -> None:
        save_checkpoint(path, self.obj_params, self.obj_state, self.bg_params, self.bg_state, self.map)

    @classmethod
    def restore(cls, path, intrinsics: CameraIntrinsics, cfg: TrainConfig | None = None) -> "Mapper":
        """Mapper around a saved checkpoint.

        Keyframe pixel content is not stored in checkpoints, so a restored
        mapper renders and meshes but cannot resume training until new frames
        are processed.
        """
        obj_params, obj_state, bg_params, bg_state, object_map, _refs = load_checkpoint(path)
        mapper = cls(intrinsics, cfg)
        mapper.obj_params, mapper.obj_state = obj_params, obj_state
        mapper.bg_params, mapper.bg_state = bg_params, bg_state
        mapper.map = object_map
        order = sorted(object_map.objects(), key=lambda inst: inst.model_index)
        mapper.model_to_object = [inst.object_id for inst in order]
        return mapper


def train_on_batch(
    params: StackedModelParams,
    state: OptimState,
    batch: RaySampleBatch,
    weights: LossWeights,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One batched forward/backward/Adam update over all models in the stack.

    Returns per-model (L_depth, L_colour, L_occ).  Models whose batch has no
    usable ray are excluded from the update (parameters and optimiser state
    untouched), matching the per-model skip of the sequential path.
    """
    out, cache = forward(params, batch.encoded)
    result = render_rays(out.occupancy, out.colour, batch.t)
    ld, lc, lo, _ = compute_losses(
        result, batch.target_depth, batch.target_colour,
        batch.target_mask, batch.valid_depth, batch.ray_ok, weights,
    )
    d_op, d_dep, d_col = loss_output_grads(
        result, batch.target_depth, batch.target_colour,
        batch.target_mask, batch.valid_depth, batch.ray_ok, weights,
    )
    d_occ, d_colour = render_backward(out.occupancy, out.colour, batch.t, result, d_op, d_dep, d_col)
    grads = backward(params, cache, d_occ, d_colour)
    update_mask = batch.ray_ok.any(axis=-1)
    adam_step(params, state, grads, update_mask=update_mask)
    return ld, lc, lo


def train_on_batch_sequential(
    params: StackedModelParams,
    state: OptimState,
    batch: RaySampleBatch,
    weights: LossWeights,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference path: the same update computed one model at a time."""
    k = params.count
    ld = np.zeros(k, dtype=np.float64)
    lc = np.zeros(k, dtype=np.float64)
    lo = np.zeros(k, dtype=np.float64)
    for i in range(k):
        p_view = params.model_view(i)
        s_view = state.model_view(i)
        sub = RaySampleBatch(
            encoded=batch.encoded[i : i + 1],
            t=batch.t[i : i + 1],
            target_depth=batch.target_depth[i : i + 1],
            target_colour=batch.target_colour[i : i + 1],
            target_mask=batch.target_mask[i : i + 1],
            valid_depth=batch.valid_depth[i : i + 1],
            ray_ok=batch.ray_ok[i : i + 1],
            has_rays=bool(batch.ray_ok[i].any()),
        )
        d, c, o = train_on_batch(p_view, s_view, sub, weights)
        ld[i], lc[i], lo[i] = d[0], c[0], o[0]
    # Per-model views carry their own version counters; record the mutation
    # on the parent so stale-cache detection keeps working.
    params.version += 1
    return ld, lc, lo


def run_mapping(
    dataset: Dataset,
    cfg: TrainConfig | None = None,
    mode: str = "vectorised",
    progress: bool = False,
) -> tuple[Mapper, list[StepReport]]:
    """Map a dataset: per frame, ingest then train steps_per_frame steps."""
    cfg = cfg if cfg is not None else TrainConfig()
    mapper = Mapper(dataset.intrinsics, cfg)
    reports: list[StepReport] = []
    n_frames = len(dataset)
    if cfg.max_frames is not None:
        n_frames = min(n_frames, cfg.max_frames)
    for i in range(n_frames):
        try:
            frame = dataset.frame(i)
            mapper.process_frame(frame, dataset.classes)
        except Exception as exc:
            raise RuntimeError(f"failed on frame {i}: {exc}") from exc
        for _ in range(cfg.steps_per_frame):
            reports.append(mapper.train_step(mode=mode))
        if progress and (i % 20 == 0 or i == n_frames - 1):
            last = reports[-1]
            print(
                f"frame {i + 1}/{n_frames}  K={last.k_models}  total={last.total:.3f}  "
                f"step_ms={last.ms:.1f}",
                flush=True,
            )
    return mapper, reports


def write_reports_csv(path, reports: list[StepReport]) -> None:
    lines = [StepReport.csv_header()]
    for r in reports:
        for oid, (d, c, o) in sorted(r.losses.items()):
            lines.append(
                f"{r.step},{r.frame_id},{r.k_models},{oid},{d:.6f},{c:.6f},{o:.6f},"
                f"{r.total:.6f},{r.ms:.3f}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------- benchmark ----------------


@dataclass
class BenchRow:
    mode: str
    k: int
    hidden: int
    ms: float


def _synthetic_batch(arch: ModelArch, k: int, rays: int, points: int, seed: int) -> RaySampleBatch:
    rng = keyed_rng(seed, PURPOSE_BENCH, k, arch.hidden)
    t = np.sort(rng.random((k, rays, points)).astype(np.float32) * 4.0, axis=-1)
    return RaySampleBatch(
        encoded=(rng.standard_normal((k, rays, points, arch.input_dim)) * 0.7).astype(np.float32),
        t=t,
        target_depth=(rng.random((k, rays)) * 4.0).astype(np.float32),
        target_colour=rng.random((k, rays, 3)).astype(np.float32),
        target_mask=rng.random((k, rays)) < 0.6,
        valid_depth=np.ones((k, rays), dtype=bool),
        ray_ok=np.ones((k, rays), dtype=bool),
        has_rays=True,
    )


def benchmark(
    k_list: list[int],
    hidden_list: list[int],
    cfg: TrainConfig | None = None,
    timed_steps: int = 50,
    warmup_steps: int = 10,
    modes: tuple[str, ...] = ("sequential", "vectorised"),
) -> list[BenchRow]:
    """Mean training-step time over synthetic in-memory batches.

    The timed region covers forward, rendering, losses, backward and the
    optimiser update; batch synthesis happens once outside time measurement.
    """
    cfg = cfg if cfg is not None else TrainConfig()
    weights = cfg.loss_weights
    rows: list[BenchRow] = []
    for hidden in hidden_list:
        arch = ModelArch(n_layers=cfg.arch_object.n_layers, hidden=hidden, n_freq=cfg.arch_object.n_freq)
        for k in k_list:
            batch = _synthetic_batch(arch, k, cfg.rays_per_object, cfg.points_per_ray, cfg.seed)
            for mode in modes:
                params, state = init_stacked(
                    arch, k, cfg.seed, PURPOSE_BENCH, lr=cfg.lr,
                    beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                )
                step_fn = train_on_batch if mode == "vectorised" else train_on_batch_sequential
                for _ in range(warmup_steps):
                    step_fn(params, state, batch, weights)
                t0 = time.perf_counter()
                for _ in range(timed_steps):
                    step_fn(params, state, batch, weights)
                ms = (time.perf_counter() - t0) / timed_steps * 1e3
                rows.append(BenchRow(mode=mode, k=k, hidden=hidden, ms=ms))
    return rows


def write_bench_csv(path, rows: list[BenchRow]) -> None:
    lines = ["mode,k,hidden,ms"]
    lines += [f"{r.mode},{r.k},{r.hidden},{r.ms:.4f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")
