"""Object-level RGB-D mapping with stacks of tiny neural occupancy fields.

Each mapped object (and the scene background) owns a small MLP that maps a
3D point to occupancy and colour.  All object models share one architecture,
so their parameters are stored stacked along a leading model axis and every
training step runs as a handful of batched matmuls instead of a Python loop
over models.
"""

from vobj.geometry import AABB, aabb_iou, look_at, pose_from_quaternion
from vobj.models import (
    FieldOutput,
    Gradients,
    ModelArch,
    OptimState,
    StackedModelParams,
    adam_step,
    append_model,
    backward,
    forward,
    init_stacked,
    positional_encode,
)
from vobj.render import (
    CameraIntrinsics,
    RenderResult,
    SamplingConfig,
    compose_pixel,
    generate_rays,
    ray_box_intersect,
    render_backward,
    render_rays,
)
from vobj.objects import (
    AssociationConfig,
    Detection,
    ObjectInstance,
    ObjectMap,
    associate,
    extract_detections,
)
from vobj.trainer import Mapper, StepReport, TrainConfig, run_mapping

__version__ = "0.1.0"

__all__ = [
    "AABB",
    "AssociationConfig",
    "CameraIntrinsics",
    "Detection",
    "FieldOutput",
    "Gradients",
    "Mapper",
    "ModelArch",
    "ObjectInstance",
    "ObjectMap",
    "OptimState",
    "RenderResult",
    "SamplingConfig",
    "StackedModelParams",
    "StepReport",
    "TrainConfig",
    "aabb_iou",
    "adam_step",
    "append_model",
    "associate",
    "backward",
    "compose_pixel",
    "extract_detections",
    "forward",
    "generate_rays",
    "init_stacked",
    "look_at",
    "pose_from_quaternion",
    "positional_encode",
    "ray_box_intersect",
    "render_backward",
    "render_rays",
    "run_mapping",
]
