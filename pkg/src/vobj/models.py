"""Stacked tiny-MLP occupancy/colour fields with hand-written gradients.

All models in a stack share one architecture, so parameters live in arrays of
shape [K, fan_out, fan_in] and a forward pass over K models is a short chain
of batched matmuls.  Gradients are analytic (no autograd dependency) and the
backward pass is validated against central finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from vobj.rng import PURPOSE_INIT_OBJECT, keyed_rng


@dataclass(frozen=True)
class ModelArch:
    """Architecture shared by every model in a stack.

    The input is a 3D point after sinusoidal encoding; the output is one
    occupancy logit plus three colour logits, squashed by a sigmoid.
    """

    n_layers: int = 4
    hidden: int = 32
    n_freq: int = 5
    include_input: bool = True

    def __post_init__(self):
        if self.n_layers < 2:
            raise ValueError(f"need at least input and output layers, got n_layers={self.n_layers}")
        if self.hidden < 1:
            raise ValueError(f"hidden width must be positive, got {self.hidden}")
        if self.n_freq < 0:
            raise ValueError(f"n_freq must be non-negative, got {self.n_freq}")
        if self.input_dim == 0:
            raise ValueError("encoding is empty: n_freq=0 with include_input=False")

    @property
    def input_dim(self) -> int:
        return (3 if self.include_input else 0) + 6 * self.n_freq

    @property
    def output_dim(self) -> int:
        return 4

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) per layer, first to last."""
        dims = [(self.hidden, self.input_dim)]
        dims += [(self.hidden, self.hidden)] * (self.n_layers - 2)
        dims.append((self.output_dim, self.hidden))
        return dims


@dataclass
class StackedModelParams:
    """Weights for up to ``capacity`` models, ``count`` of which are live.

    ``version`` increments on every mutation; activation caches record the
    version they were built against so a stale cache is rejected instead of
    silently producing wrong gradients.
    """

    arch: ModelArch
    count: int
    weights: list[np.ndarray]  # per layer, [capacity, fan_out, fan_in]
    biases: list[np.ndarray]  # per layer, [capacity, fan_out]
    frozen: np.ndarray  # [capacity] bool
    version: int = 0

    @property
    def capacity(self) -> int:
        return self.frozen.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def model_view(self, index: int) -> "StackedModelParams":
        """Single-model window sharing memory with this stack.

        In-place updates through the view (e.g. an optimiser step) write into
        the parent arrays; the parent's ``version`` must be bumped by the
        caller once the sequence of per-model updates is done.
        """
        if not (0 <= index < self.count):
            raise IndexError(f"model index {index} out of range for count {self.count}")
        return StackedModelParams(
            arch=self.arch,
            count=1,
            weights=[w[index : index + 1] for w in self.weights],
            biases=[b[index : index + 1] for b in self.biases],
            frozen=self.frozen[index : index + 1],
            version=self.version,
        )


@dataclass
class OptimState:
    """Adam state mirroring a parameter stack, with per-model step counters."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: np.ndarray  # [capacity] int64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def model_view(self, index: int) -> "OptimState":
        return OptimState(
            m_weights=[m[index : index + 1] for m in self.m_weights],
            v_weights=[v[index : index + 1] for v in self.v_weights],
            m_biases=[m[index : index + 1] for m in self.m_biases],
            v_biases=[v[index : index + 1] for v in self.v_biases],
            step=self.step[index : index + 1],
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )


@dataclass
class FieldOutput:
    occupancy: np.ndarray  # [K, ...] in (0, 1)
    colour: np.ndarray  # [K, ..., 3] in (0, 1)


@dataclass
class Gradients:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]


@dataclass
class ActivationCache:
    """Intermediate activations from forward(), consumed by backward()."""

    version: int
    lead_shape: tuple[int, ...]
    layer_inputs: list[np.ndarray]  # input of each layer, [K, N, fan_in]
    relu_masks: list[np.ndarray]  # [K, N, hidden] bool, per hidden layer
    occupancy: np.ndarray  # [K, N]
    colour: np.ndarray  # [K, N, 3]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # expit is the overflow-safe logistic; a naive 1/(1+exp(-x)) warns and
    # saturates badly for large negative logits.
    return expit(x)


def _init_model_arrays(
    arch: ModelArch, seed: int, model_index: int, stream: int, dtype: np.dtype
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights and biases.

    The draw is keyed by (seed, stream, model_index) so appending model K to a
    stack of K yields exactly the same values as initialising K+1 models from
    scratch.
    """
    rng = keyed_rng(seed, stream, model_index)
    weights, biases = [], []
    for fan_out, fan_in in arch.layer_dims():
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype))
        biases.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
    return weights, biases


def _alloc_stack(arch: ModelArch, capacity: int, dtype: np.dtype) -> StackedModelParams:
    weights = [np.zeros((capacity, fo, fi), dtype=dtype) for fo, fi in arch.layer_dims()]
    biases = [np.zeros((capacity, fo), dtype=dtype) for fo, _ in arch.layer_dims()]
    return StackedModelParams(
        arch=arch, count=0, weights=weights, biases=biases, frozen=np.zeros(capacity, dtype=bool)
    )


def _alloc_state(params: StackedModelParams, lr: float, beta1: float, beta2: float, eps: float) -> OptimState:
    return OptimState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        v_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_biases=[np.zeros_like(b) for b in params.biases],
        step=np.zeros(params.capacity, dtype=np.int64),
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def init_stacked(
    arch: ModelArch,
    count: int,
    seed: int,
    stream: int = PURPOSE_INIT_OBJECT,
    dtype: np.dtype = np.float32,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[StackedModelParams, OptimState]:
    """Fresh stack of ``count`` models plus zeroed optimiser state."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    capacity = max(1, int(2 ** np.ceil(np.log2(max(count, 1)))))
    params = _alloc_stack(arch, capacity, np.dtype(dtype))
    state = _alloc_state(params, lr, beta1, beta2, eps)
    for i in range(count):
        _write_model(params, i, arch, seed, i, stream)
    params.count = count
    return params, state


def _write_model(params, slot, arch, seed, model_index, stream):
    ws, bs = _init_model_arrays(arch, seed, model_index, stream, params.dtype)
    for l in range(len(ws)):
        params.weights[l][slot] = ws[l]
        params.biases[l][slot] = bs[l]


def _grow(params: StackedModelParams, state: OptimState, min_capacity: int) -> None:
    new_cap = max(1, int(2 ** np.ceil(np.log2(min_capacity))))
    if new_cap <= params.capacity:
        return
    k = params.count
    for l in range(len(params.weights)):
        for holder, name in ((params, "weights"), (params, "biases")):
            old = getattr(holder, name)[l]
            new = np.zeros((new_cap,) + old.shape[1:], dtype=old.dtype)
            new[:k] = old[:k]
            getattr(holder, name)[l] = new
        for name in ("m_weights", "v_weights", "m_biases", "v_biases"):
            old = getattr(state, name)[l]
            new = np.zeros((new_cap,) + old.shape[1:], dtype=old.dtype)
            new[:k] = old[:k]
            getattr(state, name)[l] = new
    frozen = np.zeros(new_cap, dtype=bool)
    frozen[:k] = params.frozen[:k]
    params.frozen = frozen
    step = np.zeros(new_cap, dtype=np.int64)
    step[:k] = state.step[:k]
    state.step = step


def append_model(
    params: StackedModelParams,
    state: OptimState,
    seed: int,
    stream: int = PURPOSE_INIT_OBJECT,
) -> int:
    """Add one freshly initialised model; returns its index in the stack.

    Existing parameter blocks are byte-preserved and the new model matches a
    from-scratch initialisation of the same index.
    """
    idx = params.count
    if idx + 1 > params.capacity:
        _grow(params, state, idx + 1)
    _write_model(params, idx, params.arch, seed, idx, stream)
    for l in range(len(params.weights)):
        state.m_weights[l][idx] = 0
        state.v_weights[l][idx] = 0
        state.m_biases[l][idx] = 0
        state.v_biases[l][idx] = 0
    state.step[idx] = 0
    params.frozen[idx] = False
    params.count = idx + 1
    params.version += 1
    return idx


def set_frozen(params: StackedModelParams, index: int, frozen: bool) -> None:
    if not (0 <= index < params.count):
        raise IndexError(f"model index {index} out of range for count {params.count}")
    params.frozen[index] = frozen


def positional_encode(points: np.ndarray, center: np.ndarray, half_extent: np.ndarray,
                      arch: ModelArch, scale: float) -> np.ndarray:
    """Scaled sinusoidal encoding of points normalised to the object's box.

    p_norm = (p - center) / half_extent, then [p_norm] ++ concat over
    i < n_freq of [sin(2^i pi p_norm / scale), cos(2^i pi p_norm / scale)].
    ``scale`` spreads the lowest frequency so a unit box covers less than one
    period, which keeps the encoding injective over the padded box.
    """
    pts = np.asarray(points)
    center = np.asarray(center, dtype=pts.dtype)
    half = np.asarray(half_extent, dtype=pts.dtype)
    if np.any(half <= 0):
        raise ValueError(f"half_extent must be positive, got {half}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    p = (pts - center) / half
    parts = [p] if arch.include_input else []
    for i in range(arch.n_freq):
        arg = (np.pi * (2.0**i) / scale) * p
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    return np.concatenate(parts, axis=-1)


def forward(params: StackedModelParams, encoded: np.ndarray) -> tuple[FieldOutput, ActivationCache]:
    """Batched forward pass.

    ``encoded`` has shape [K, ..., input_dim] with K == params.count; any
    middle dimensions are allowed and preserved on the outputs.
    """
    k = params.count
    if encoded.ndim < 2 or encoded.shape[0] != k:
        raise ValueError(f"expected leading model axis of size {k}, got shape {encoded.shape}")
    if encoded.shape[-1] != params.arch.input_dim:
        raise ValueError(
            f"encoding dim {encoded.shape[-1]} does not match arch input dim {params.arch.input_dim}"
        )
    lead_shape = encoded.shape[1:-1]
    x = np.ascontiguousarray(encoded.reshape(k, -1, params.arch.input_dim))

    layer_inputs: list[np.ndarray] = []
    relu_masks: list[np.ndarray] = []
    n_layers = len(params.weights)
    for l in range(n_layers):
        w = params.weights[l][:k]
        b = params.biases[l][:k]
        layer_inputs.append(x)
        z = np.matmul(x, w.transpose(0, 2, 1))
        z += b[:, None, :]
        if l < n_layers - 1:
            relu_masks.append(z > 0)
            x = np.maximum(z, 0.0, out=z)
        else:
            x = z
    occ = _sigmoid(x[..., 0])
    col = _sigmoid(x[..., 1:])
    cache = ActivationCache(
        version=params.version,
        lead_shape=lead_shape,
        layer_inputs=layer_inputs,
        relu_masks=relu_masks,
        occupancy=occ,
        colour=col,
    )
    out = FieldOutput(
        occupancy=occ.reshape((k,) + lead_shape),
        colour=col.reshape((k,) + lead_shape + (3,)),
    )
    return out, cache


def backward(
    params: StackedModelParams,
    cache: ActivationCache,
    grad_occupancy: np.ndarray,
    grad_colour: np.ndarray,
) -> Gradients:
    """Parameter gradients given output gradients.

    Gradient shapes mirror the forward outputs: [K, ...] for occupancy and
    [K, ..., 3] for colour.  The returned gradients line up layer-for-layer
    with params.weights / params.biases (live models only).
    """
    if cache.version != params.version:
        raise ValueError(
            f"stale activation cache (cache version {cache.version}, params version {params.version})"
        )
    k = params.count
    n = cache.occupancy.shape[1]
    go = np.asarray(grad_occupancy).reshape(k, n)
    gc = np.asarray(grad_colour).reshape(k, n, 3)

    # d(sigmoid(z))/dz = s (1 - s); heads share the last linear layer.
    dz = np.empty((k, n, 4), dtype=cache.occupancy.dtype)
    dz[..., 0] = go * cache.occupancy * (1.0 - cache.occupancy)
    dz[..., 1:] = gc * cache.colour * (1.0 - cache.colour)

    n_layers = len(params.weights)
    d_weights: list[np.ndarray] = [None] * n_layers
    d_biases: list[np.ndarray] = [None] * n_layers
    # Bias gradients as a [1, N] @ [K, N, F] matmul: same sum, BLAS-paced
    # instead of a strided reduction.
    ones_row = np.ones((1, 1, n), dtype=dz.dtype)
    for l in range(n_layers - 1, -1, -1):
        x_in = cache.layer_inputs[l]
        d_weights[l] = np.matmul(dz.transpose(0, 2, 1), x_in)
        d_biases[l] = np.matmul(ones_row, dz)[:, 0, :]
        if l > 0:
            dx = np.matmul(dz, params.weights[l][:k])
            dx *= cache.relu_masks[l - 1]
            dz = dx
    return Gradients(d_weights=d_weights, d_biases=d_biases)


def adam_step(
    params: StackedModelParams,
    state: OptimState,
    grads: Gradients,
    update_mask: np.ndarray | None = None,
) -> None:
    """One Adam update applied in place, skipping frozen/masked models.

    ``update_mask`` (bool per live model) excludes models that saw no valid
    rays this step; their parameters, moments and step counters are untouched,
    exactly as if they were frozen for the step.
    """
    k = params.count
    active = ~params.frozen[:k]
    if update_mask is not None:
        mask = np.asarray(update_mask, dtype=bool).reshape(k)
        active = active & mask
    idx = np.flatnonzero(active)
    if idx.size == 0:
        params.version += 1
        return

    bad = np.zeros(k, dtype=bool)
    for gw, gb in zip(grads.d_weights, grads.d_biases):
        bad |= ~np.isfinite(gw).all(axis=(1, 2)) | ~np.isfinite(gb).all(axis=1)
    bad &= active
    if bad.any():
        raise FloatingPointError(f"non-finite gradient for model index {int(np.flatnonzero(bad)[0])}")

    b1, b2, eps = state.beta1, state.beta2, state.eps
    # When every live model updates, slice views avoid the gather/scatter
    # copies of fancy indexing; the arithmetic is the same either way.
    full = idx.size == k
    t = (state.step[idx] + 1).astype(np.float64)
    corr1 = (1.0 - b1**t).astype(params.dtype)
    corr2 = (1.0 - b2**t).astype(params.dtype)
    lr = params.dtype.type(state.lr)

    def update(param_arr, m_arr, v_arr, grad, corr_shape):
        if full:
            g, m, v = grad, m_arr[:k], v_arr[:k]
        else:
            g, m, v = grad[idx], m_arr[idx], v_arr[idx]
        m *= b1
        m += (1.0 - b1) * g
        gg = np.square(g)
        gg *= 1.0 - b2
        v *= b2
        v += gg
        if not full:
            m_arr[idx] = m
            v_arr[idx] = v
        denom = np.sqrt(v / corr2.reshape(corr_shape))
        denom += eps
        upd = m / corr1.reshape(corr_shape)
        upd /= denom
        upd *= lr
        if full:
            param_arr[:k] -= upd
        else:
            param_arr[idx] -= upd

    for l in range(len(params.weights)):
        update(params.weights[l], state.m_weights[l], state.v_weights[l], grads.d_weights[l], (-1, 1, 1))
        update(params.biases[l], state.m_biases[l], state.v_biases[l], grads.d_biases[l], (-1, 1))
    state.step[idx] += 1
    params.version += 1
