"""Rays, depth-guided sampling, and occupancy ray rendering with gradients.

Rendering follows the termination-probability form: a sample terminates the
ray with probability t_i = o_i * prod_{j<i} (1 - o_j), and opacity, depth and
colour are expectations under t_i.  The backward pass here is analytic and is
checked against finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vobj.geometry import AABB


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class SamplingConfig:
    """Depth-guided ray sampling parameters (distances in metres)."""

    t_near: float = 0.0
    t_far: float = 8.0
    n_stratified: int = 5
    n_surface: int = 5
    surface_std: float = 0.03

    def __post_init__(self):
        if self.t_far <= self.t_near:
            raise ValueError(f"t_far ({self.t_far}) must exceed t_near ({self.t_near})")
        if self.n_stratified < 1 or self.n_surface < 0:
            raise ValueError("need at least one stratified sample and non-negative surface count")
        if self.surface_std <= 0:
            raise ValueError(f"surface_std must be positive, got {self.surface_std}")

    @property
    def n_points(self) -> int:
        return self.n_stratified + self.n_surface


@dataclass(frozen=True)
class LossWeights:
    colour: float = 5.0
    occupancy: float = 10.0


@dataclass
class RenderResult:
    opacity: np.ndarray  # [...,] sum of termination probabilities
    depth: np.ndarray
    colour: np.ndarray  # [..., 3]
    weights: np.ndarray  # [..., S] termination probabilities
    transmittance: np.ndarray  # [..., S] prod_{j<i} (1 - o_j)


def camera_dirs(pixels: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Unnormalised camera-frame directions ((u-cx)/fx, (v-cy)/fy, 1)."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    u, v = px[:, 0], px[:, 1]
    if np.any(u < 0) or np.any(u >= intrinsics.width) or np.any(v < 0) or np.any(v >= intrinsics.height):
        raise ValueError("pixel coordinates outside the image")
    d = np.empty((px.shape[0], 3))
    d[:, 0] = (u - intrinsics.cx) / intrinsics.fx
    d[:, 1] = (v - intrinsics.cy) / intrinsics.fy
    d[:, 2] = 1.0
    return d


def ray_depth_scale(pixels: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Factor converting z-depth to distance along the unit ray, per pixel."""
    return np.linalg.norm(camera_dirs(pixels, intrinsics), axis=-1)


def generate_rays(
    pixels: np.ndarray, intrinsics: CameraIntrinsics, pose: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """World-space origins and unit directions for pixel centres.

    ``pose`` is camera-to-world (4x4, +z forward, +y down in camera frame).
    """
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (4, 4):
        raise ValueError(f"pose must be 4x4, got {pose.shape}")
    d_cam = camera_dirs(pixels, intrinsics)
    d_world = d_cam @ pose[:3, :3].T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose[:3, 3], d_world.shape).copy()
    return origins, d_world


def ray_box_intersect(
    origins: np.ndarray, dirs: np.ndarray, box: AABB
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Entry/exit distances of rays against a box, clamped to t >= 0.

    Returns (t_entry, t_exit, hit).  A ray starting inside the box gets
    t_entry 0.  Axis-parallel rays are handled by the slab sign rules.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t_a = (box.min - o) * inv
        t_b = (box.max - o) * inv
    t_lo = np.minimum(t_a, t_b)
    t_hi = np.maximum(t_a, t_b)
    # Parallel rays: inside the slab -> (-inf, +inf); outside -> empty
    # interval.  This must happen after the min/max ordering above, or the
    # deliberately inverted empty interval would be re-sorted into a full one.
    par = d == 0
    if par.any():
        inside = (o >= box.min) & (o <= box.max)
        t_lo = np.where(par, np.where(inside, -np.inf, np.inf), t_lo)
        t_hi = np.where(par, np.where(inside, np.inf, -np.inf), t_hi)
    near = t_lo.max(axis=-1)
    far = t_hi.min(axis=-1)
    t_entry = np.maximum(near, 0.0)
    hit = (far >= t_entry) & (far >= 0.0)
    return t_entry, far, hit


def stratified_samples(u: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """One jittered sample per bin of [lo, hi); u in [0,1) of shape [..., n]."""
    n = u.shape[-1]
    edges = (np.arange(n) + u) / n
    return lo[..., None] + edges * (hi - lo)[..., None]


def sample_along_rays(
    rng: np.random.Generator,
    surface_t: np.ndarray,
    valid: np.ndarray,
    in_mask: np.ndarray,
    far: np.ndarray,
    cfg: SamplingConfig,
    near: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-ray sample distances, depth-guided where a surface depth exists.

    surface_t: measured surface distance along each ray (any surface, not
        necessarily the object's own), already converted from z-depth.
    valid: whether that measurement exists.
    in_mask: ray lands on the object's mask.  In-mask rays with valid depth
        get n_stratified bins in [near, surface_t] plus n_surface Gaussian
        samples around the surface; without valid depth they fall back to
        stratified over [near, far].  Off-mask rays supervise empty space:
        all samples stay in front of the occluding surface (or run to ``far``
        when no surface was measured).
    far: per-ray upper bound (typically the object's box exit, else t_f).
    near: per-ray lower bound (typically the object's box entry); defaults
        to cfg.t_near.  Concentrating samples inside the object's box is what
        makes empty-space supervision effective: spread over the full frustum
        most samples would fall where the field is never queried.

    Returns (t [R, S] sorted ascending, ok [R]).  ``ok`` is False when the
    usable interval is empty (e.g. occluder at the near bound); such rays
    should get zero loss weight.  All random draws happen unconditionally in
    a fixed order, so the stream consumed depends only on the ray count.
    """
    surface_t = np.asarray(surface_t, dtype=np.float64)
    r = surface_t.shape[0]
    n_c, n_s = cfg.n_stratified, cfg.n_surface
    s = cfg.n_points
    u_strat = rng.random((r, n_c))
    z_surf = rng.standard_normal((r, n_s))
    u_fallback = rng.random((r, s))

    lo = np.full(r, cfg.t_near) if near is None else np.asarray(near, dtype=np.float64)
    far = np.maximum(np.asarray(far, dtype=np.float64), lo)

    raw_valid = np.asarray(valid, bool)
    has_depth = raw_valid & (surface_t > lo)
    # A measured surface at or in front of the near bound leaves no usable
    # interval: sampling behind it would supervise occluded space as empty.
    near_block = raw_valid & ~has_depth
    in_mask = np.asarray(in_mask, bool)
    # Mask/depth misalignment at silhouette edges: the pixel is on the mask
    # but its depth lands well past the object's box.  Drop such rays rather
    # than pull the surface to a background measurement.
    overshoot = in_mask & has_depth & (surface_t > far + 3.0 * cfg.surface_std)

    # In-mask, valid depth: bins to the surface plus a Gaussian surface band
    # clipped to [near, min(surface + 3 sigma, far)].
    guided = in_mask & has_depth & ~overshoot
    t_guided = np.concatenate(
        [
            stratified_samples(u_strat, lo, surface_t),
            np.clip(
                surface_t[:, None] + cfg.surface_std * z_surf,
                lo[:, None],
                np.minimum(surface_t + 3.0 * cfg.surface_std, far)[:, None],
            ),
        ],
        axis=1,
    )

    # Off-mask: empty-space supervision up to the occluding surface if one was
    # measured, else to the box exit.  In-mask rays without depth fall back to
    # the full interval.
    upper = np.where(has_depth, np.minimum(surface_t, far), far)
    upper = np.where(in_mask, far, upper)
    t_fallback = stratified_samples(u_fallback, lo, np.maximum(upper, lo))

    t = np.where(guided[:, None], t_guided, t_fallback)
    ok = (guided | (upper > lo)) & ~near_block & ~overshoot
    t.sort(axis=1)
    return t, ok


def render_rays(occupancy: np.ndarray, colour: np.ndarray, t: np.ndarray) -> RenderResult:
    """Composite per-sample occupancy/colour into per-ray opacity/depth/colour.

    Termination probability of sample i is o_i * prod_{j<i} (1 - o_j); the
    ray's opacity is the total termination mass (not forced to 1), so rays
    through empty space render opacity ~0, depth ~0 and black.
    """
    occupancy = np.asarray(occupancy)
    one_minus = 1.0 - occupancy
    trans = np.empty_like(one_minus)
    trans[..., 0] = 1.0
    np.cumprod(one_minus[..., :-1], axis=-1, out=trans[..., 1:])
    weights = occupancy * trans
    opacity = weights.sum(axis=-1)
    depth = (weights * t).sum(axis=-1)
    col = (weights[..., None] * colour).sum(axis=-2)
    return RenderResult(opacity=opacity, depth=depth, colour=col, weights=weights, transmittance=trans)


def render_backward(
    occupancy: np.ndarray,
    colour: np.ndarray,
    t: np.ndarray,
    result: RenderResult,
    grad_opacity: np.ndarray,
    grad_depth: np.ndarray,
    grad_colour: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of (opacity, depth, colour) w.r.t. per-sample occupancy/colour.

    With g_i = dO + dD t_i + sum_ch dC_ch c_{i,ch} (the gradient through
    sample i's termination weight),

        dL/dc_{i,ch} = w_i dC_ch
        dL/do_i      = g_i T_i - (sum_{m>i} g_m w_m) / (1 - o_i)

    The division is safe: the suffix sum carries a (1 - o_i) factor inside
    every w_m, so when 1 - o_i underflows the suffix is exactly zero and the
    clamped denominator never produces a spurious value.
    """
    g = (
        grad_opacity[..., None]
        + grad_depth[..., None] * t
        + (grad_colour[..., None, :] * colour).sum(axis=-1)
    )
    d_colour = result.weights[..., None] * grad_colour[..., None, :]
    gw = g * result.weights
    rev = np.flip(np.cumsum(np.flip(gw, axis=-1), axis=-1), axis=-1)
    suffix = rev - gw
    denom = np.maximum(1.0 - occupancy, 1e-7)
    d_occ = g * result.transmittance - suffix / denom
    return d_occ, d_colour


def compute_losses(
    result: RenderResult,
    target_depth: np.ndarray,
    target_colour: np.ndarray,
    target_mask: np.ndarray,
    valid_depth: np.ndarray,
    ray_ok: np.ndarray,
    weights: LossWeights,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Summed L1 losses over a ray batch, plus the weighted total.

    depth: |D - D*| over in-mask rays with valid depth; colour: |C - C*|
    summed over channels, over in-mask rays; occupancy: |O - M| over all
    usable rays (M is the mask indicator).  Sums, not means, reduce over the
    ray axis; the leading axes (e.g. the model axis) are preserved.  The
    total is depth + weights.colour * colour + weights.occupancy * occ.
    """
    mask = np.asarray(target_mask, bool) & ray_ok
    w_depth = (mask & valid_depth).astype(result.depth.dtype)
    w_col = mask.astype(result.depth.dtype)
    w_occ = np.asarray(ray_ok, bool).astype(result.depth.dtype)
    l_depth = (w_depth * np.abs(result.depth - target_depth)).sum(axis=-1)
    l_col = (w_col * np.abs(result.colour - target_colour).sum(axis=-1)).sum(axis=-1)
    l_occ = (w_occ * np.abs(result.opacity - np.asarray(target_mask, bool).astype(result.depth.dtype))).sum(axis=-1)
    l_total = l_depth + weights.colour * l_col + weights.occupancy * l_occ
    return l_depth, l_col, l_occ, l_total


def loss_output_grads(
    result: RenderResult,
    target_depth: np.ndarray,
    target_colour: np.ndarray,
    target_mask: np.ndarray,
    valid_depth: np.ndarray,
    ray_ok: np.ndarray,
    weights: LossWeights,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """d(total loss)/d(opacity, depth, colour) per ray for the L1 objective.

    total = L_depth + weights.colour * L_colour + weights.occupancy * L_occ.
    """
    mask = np.asarray(target_mask, bool) & ray_ok
    m_ind = np.asarray(target_mask, bool).astype(result.depth.dtype)
    w_depth = (mask & valid_depth).astype(result.depth.dtype)
    w_col = mask.astype(result.depth.dtype)
    w_occ = np.asarray(ray_ok, bool).astype(result.depth.dtype)
    d_depth = w_depth * np.sign(result.depth - target_depth)
    d_col = (weights.colour * w_col)[..., None] * np.sign(result.colour - target_colour)
    d_opacity = weights.occupancy * w_occ * np.sign(result.opacity - m_ind)
    return d_opacity, d_depth, d_col


BACKGROUND_ID = 0


def compose_pixel(
    candidates: list[tuple[int, float, float]],
    background: tuple[float, np.ndarray],
    colours: dict[int, np.ndarray] | None = None,
    threshold: float = 0.5,
) -> tuple[float, np.ndarray | None, int]:
    """Pick the visible surface for one pixel from per-object renders.

    candidates: (object_id, opacity, depth) per object whose box the ray hits.
    Objects with opacity >= threshold compete by smallest depth; exact depth
    ties go to the smaller object id, which makes the result independent of
    candidate order.  With no qualifying object the background render wins.

    Returns (depth, colour, object_id); colour is taken from ``colours`` when
    given (None otherwise for the background if absent there).
    """
    best: tuple[float, int] | None = None
    for obj_id, opacity, depth in candidates:
        if opacity >= threshold:
            key = (depth, obj_id)
            if best is None or key < best:
                best = key
    if best is None:
        bg_depth, bg_colour = background
        return bg_depth, bg_colour, BACKGROUND_ID
    depth, obj_id = best
    colour = None if colours is None else colours.get(obj_id)
    return depth, colour, obj_id
