"""Binary checkpoint: both model stacks, optimiser state and the object table.

Layout (all integers little-endian):
    magic "VOBJ", format version u32
    stack section x2 (objects first, then background):
        arch: n_layers u32, hidden u32, n_freq u32, include_input u8
        count K u32
        optimiser hypers: lr, beta1, beta2, eps (f64)
        per layer, in order: weights f32 [K, fan_out, fan_in] C-order,
                             biases  f32 [K, fan_out]
        per layer: adam m_w, v_w (like weights), m_b, v_b (like biases)
        step counters i64 [K]; frozen flags u8 [K]
    object table:
        n u32, then per instance: object_id i32, semantic_class i32,
        flags u8 (bit0 background, bit1 active), model_index i32,
        pe_scale f64, bound min/max f64 [6], obs_count u32,
        n_keyframes u32, per keyframe: frame_id u32, bbox u32 [4]

Keyframes serialise as references (frame id + bbox); pixel crops are
re-loadable from the dataset, so checkpoints stay small and byte-stable.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from vobj.geometry import AABB
from vobj.models import ModelArch, OptimState, StackedModelParams, _alloc_stack, _alloc_state
from vobj.objects import Keyframe, ObjectInstance, ObjectMap

MAGIC = b"VOBJ"
FORMAT_VERSION = 1


def _write_array(fh, arr: np.ndarray, dtype: str) -> None:
    fh.write(np.ascontiguousarray(arr).astype(dtype).tobytes())


def _read_array(fh, shape: tuple[int, ...], dtype: str) -> np.ndarray:
    n = int(np.prod(shape)) if shape else 1
    nbytes = n * np.dtype(dtype).itemsize
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise ValueError("truncated checkpoint file")
    return np.frombuffer(buf, dtype=dtype).reshape(shape).copy()


def _write_stack(fh, params: StackedModelParams, state: OptimState) -> None:
    a = params.arch
    k = params.count
    fh.write(struct.pack("<IIIB", a.n_layers, a.hidden, a.n_freq, int(a.include_input)))
    fh.write(struct.pack("<I", k))
    fh.write(struct.pack("<dddd", state.lr, state.beta1, state.beta2, state.eps))
    for l in range(len(params.weights)):
        _write_array(fh, params.weights[l][:k], "<f4")
        _write_array(fh, params.biases[l][:k], "<f4")
    for l in range(len(params.weights)):
        _write_array(fh, state.m_weights[l][:k], "<f4")
        _write_array(fh, state.v_weights[l][:k], "<f4")
        _write_array(fh, state.m_biases[l][:k], "<f4")
        _write_array(fh, state.v_biases[l][:k], "<f4")
    _write_array(fh, state.step[:k], "<i8")
    _write_array(fh, params.frozen[:k], "u1")


def _read_stack(fh) -> tuple[StackedModelParams, OptimState]:
    n_layers, hidden, n_freq, include_input = struct.unpack("<IIIB", fh.read(13))
    (k,) = struct.unpack("<I", fh.read(4))
    lr, beta1, beta2, eps = struct.unpack("<dddd", fh.read(32))
    arch = ModelArch(n_layers=n_layers, hidden=hidden, n_freq=n_freq, include_input=bool(include_input))
    capacity = max(1, int(2 ** np.ceil(np.log2(max(k, 1)))))
    params = _alloc_stack(arch, capacity, np.dtype(np.float32))
    state = _alloc_state(params, lr, beta1, beta2, eps)
    dims = arch.layer_dims()
    for l, (fo, fi) in enumerate(dims):
        params.weights[l][:k] = _read_array(fh, (k, fo, fi), "<f4")
        params.biases[l][:k] = _read_array(fh, (k, fo), "<f4")
    for l, (fo, fi) in enumerate(dims):
        state.m_weights[l][:k] = _read_array(fh, (k, fo, fi), "<f4")
        state.v_weights[l][:k] = _read_array(fh, (k, fo, fi), "<f4")
        state.m_biases[l][:k] = _read_array(fh, (k, fo), "<f4")
        state.v_biases[l][:k] = _read_array(fh, (k, fo), "<f4")
    state.step[:k] = _read_array(fh, (k,), "<i8")
    params.frozen[:k] = _read_array(fh, (k,), "u1").astype(bool)
    params.count = k
    return params, state


def _write_object_table(fh, object_map: ObjectMap) -> None:
    insts = [object_map.instances[oid] for oid in sorted(object_map.instances)]
    fh.write(struct.pack("<I", len(insts)))
    for inst in insts:
        flags = (1 if inst.is_background else 0) | (2 if inst.active else 0)
        fh.write(struct.pack("<iiBi", inst.object_id, inst.semantic_class, flags, inst.model_index))
        fh.write(struct.pack("<d", inst.pe_scale))
        fh.write(struct.pack("<6d", *inst.aabb.min, *inst.aabb.max))
        fh.write(struct.pack("<II", inst.obs_count, len(inst.keyframes)))
        for kf in inst.keyframes:
            fh.write(struct.pack("<I4I", kf.frame_id, *kf.bbox))


def _read_object_table(fh) -> tuple[ObjectMap, list[list[tuple[int, tuple[int, int, int, int]]]]]:
    (n,) = struct.unpack("<I", fh.read(4))
    object_map = ObjectMap()
    keyframe_refs: list[list[tuple[int, tuple[int, int, int, int]]]] = []
    for _ in range(n):
        oid, cls, flags, model_index = struct.unpack("<iiBi", fh.read(13))
        (pe_scale,) = struct.unpack("<d", fh.read(8))
        bound = struct.unpack("<6d", fh.read(48))
        obs_count, n_kf = struct.unpack("<II", fh.read(8))
        refs = []
        for _ in range(n_kf):
            vals = struct.unpack("<I4I", fh.read(20))
            refs.append((vals[0], tuple(vals[1:])))
        inst = ObjectInstance(
            object_id=oid,
            semantic_class=cls,
            aabb=AABB(np.array(bound[:3]), np.array(bound[3:])),
            pe_scale=pe_scale,
            model_index=model_index,
            is_background=bool(flags & 1),
            active=bool(flags & 2),
            obs_count=obs_count,
        )
        object_map.restore(inst)
        keyframe_refs.append(refs)
    return object_map, keyframe_refs


def save_checkpoint(
    path,
    obj_params: StackedModelParams,
    obj_state: OptimState,
    bg_params: StackedModelParams,
    bg_state: OptimState,
    object_map: ObjectMap,
) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_stack(fh, obj_params, obj_state)
        _write_stack(fh, bg_params, bg_state)
        _write_object_table(fh, object_map)


def load_checkpoint(path):
    """Returns (obj_params, obj_state, bg_params, bg_state, map, keyframe_refs).

    keyframe_refs holds (frame_id, bbox) per instance in object-id order;
    callers that want to resume training re-hydrate pixel data from the
    dataset.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        obj_params, obj_state = _read_stack(fh)
        bg_params, bg_state = _read_stack(fh)
        object_map, keyframe_refs = _read_object_table(fh)
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after object table")
    return obj_params, obj_state, bg_params, bg_state, object_map, keyframe_refs
