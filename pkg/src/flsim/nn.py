"""From-scratch neural networks over flat parameter vectors.

Models are described by a ModelSpec (an ordered list of layer descriptors)
and parameterised by a single flat array, so that federated payloads are
plain vectors regardless of architecture.  Everything here is a pure
function of its inputs: no global RNG, no hidden state, no in-place
mutation of caller-owned arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InputError, LayoutError
from . import rng

MODEL = "model"
UPDATE = "update"


# ---------------------------------------------------------------------------
# Layer descriptors and model specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Conv:
    """2-D convolution, stride 1, no padding."""
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int


@dataclass(frozen=True)
class MaxPool:
    """Square max pooling; window must divide the feature map evenly."""
    window: int


@dataclass(frozen=True)
class Relu:
    pass


Layer = Union[Dense, Conv, MaxPool, Relu]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor defining the layout of every parameter vector."""

    kind: str  # "mlp" or "cnn"
    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int]  # (channels, height, width)
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self._validate()

    def _validate(self):
        shape = self.input_shape
        if len(shape) != 3 or any(d < 1 for d in shape):
            raise LayoutError(f"bad input shape {shape}")
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                flat = int(np.prod(shape))
                if flat != layer.in_dim:
                    raise LayoutError(
                        f"layer {i}: dense expects {layer.in_dim} inputs, "
                        f"previous shape {shape} provides {flat}")
                shape = (layer.out_dim,)
            elif isinstance(layer, Conv):
                if len(shape) != 3 or shape[0] != layer.in_channels:
                    raise LayoutError(
                        f"layer {i}: conv expects {layer.in_channels} channels, got {shape}")
                h = shape[1] - layer.kernel_h + 1
                w = shape[2] - layer.kernel_w + 1
                if h < 1 or w < 1:
                    raise LayoutError(f"layer {i}: kernel larger than input {shape}")
                shape = (layer.out_channels, h, w)
            elif isinstance(layer, MaxPool):
                if len(shape) != 3:
                    raise LayoutError(f"layer {i}: maxpool needs a 3-d feature map")
                if shape[1] % layer.window or shape[2] % layer.window:
                    raise LayoutError(
                        f"layer {i}: window {layer.window} does not divide {shape}")
                shape = (shape[0], shape[1] // layer.window, shape[2] // layer.window)
            elif isinstance(layer, Relu):
                pass
            else:
                raise LayoutError(f"layer {i}: unknown layer type {layer!r}")
        if shape != (self.num_classes,):
            raise LayoutError(
                f"final layer produces {shape}, expected ({self.num_classes},)")

    def param_count(self) -> int:
        total = 0
        for layer in self.layers:
            if isinstance(layer, Dense):
                total += layer.in_dim * layer.out_dim + layer.out_dim
            elif isinstance(layer, Conv):
                total += (layer.out_channels * layer.in_channels
                          * layer.kernel_h * layer.kernel_w + layer.out_channels)
        return total


def mlp_spec(input_shape=(1, 28, 28), hidden: Sequence[int] = (200,),
             num_classes: int = 10) -> ModelSpec:
    """Fully connected network with ReLU between layers."""
    dims = [int(np.prod(input_shape))] + list(hidden) + [num_classes]
    layers: list[Layer] = []
    for i in range(len(dims) - 1):
        layers.append(Dense(dims[i], dims[i + 1]))
        if i < len(dims) - 2:
            layers.append(Relu())
    return ModelSpec("mlp", tuple(layers), tuple(input_shape), num_classes)


def cnn_spec(input_shape=(1, 28, 28), num_classes: int = 10) -> ModelSpec:
    """Two conv+pool stages followed by two dense layers (28x28 inputs)."""
    c, h, w = input_shape
    layers: list[Layer] = [
        Conv(c, 10, 5, 5), MaxPool(2), Relu(),
        Conv(10, 20, 5, 5), MaxPool(2), Relu(),
    ]
    fh = ((h - 4) // 2 - 4) // 2
    fw = ((w - 4) // 2 - 4) // 2
    flat = 20 * fh * fw
    layers += [Dense(flat, 50), Relu(), Dense(50, num_classes)]
    return ModelSpec("cnn", tuple(layers), tuple(input_shape), num_classes)


# ---------------------------------------------------------------------------
# Parameter vectors and batches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamVector:
    """Flat parameter array tagged with its payload kind and layout."""

    kind: str  # MODEL or UPDATE
    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        if self.kind not in (MODEL, UPDATE):
            raise LayoutError(f"unknown payload kind {self.kind!r}")
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise LayoutError(f"parameter vector must be 1-d, got shape {v.shape}")
        if v.shape[0] != self.spec.param_count():
            raise LayoutError(
                f"vector length {v.shape[0]} != spec count {self.spec.param_count()}")
        if not np.all(np.isfinite(v)):
            raise LayoutError("parameter vector contains NaN or Inf")
        object.__setattr__(self, "values", v)

    @property
    def dtype(self):
        return self.values.dtype

    def same_layout(self, other: "ParamVector") -> bool:
        return self.spec is other.spec or self.spec == other.spec


def check_same_layout(a: ParamVector, b: ParamVector):
    if not a.same_layout(b):
        raise LayoutError("parameter vectors have different layouts")


def pv_add(a: ParamVector, b: ParamVector) -> ParamVector:
    """model+update -> model, update+update -> update."""
    check_same_layout(a, b)
    if a.kind == MODEL and b.kind == MODEL:
        raise LayoutError("cannot add two model vectors")
    kind = MODEL if MODEL in (a.kind, b.kind) else UPDATE
    return ParamVector(kind, a.values + b.values, a.spec)


def pv_sub(a: ParamVector, b: ParamVector) -> ParamVector:
    """Difference of two same-kind vectors is an update."""
    check_same_layout(a, b)
    if a.kind != b.kind:
        raise LayoutError(f"cannot subtract {b.kind} from {a.kind}")
    return ParamVector(UPDATE, a.values - b.values, a.spec)


@dataclass(frozen=True)
class Batch:
    """A mini-batch: inputs in [0,1] and integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise InputError("inputs and labels differ in length")
        if len(self.inputs) < 1:
            raise InputError("empty batch")

    def __len__(self):
        return len(self.inputs)


@dataclass(frozen=True)
class GradResult:
    loss: float
    grad: ParamVector


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_params(spec: ModelSpec, seed: int, scheme: str = "glorot",
                dtype=np.float64) -> ParamVector:
    """Deterministically initialize a model vector.

    "glorot" draws each weight uniformly in +-sqrt(6/(fan_in+fan_out)) and
    zeroes biases; "zero" returns the all-zeros vector.  Draws happen in
    float64 and are cast, so the values agree across precisions.
    """
    n = spec.param_count()
    if scheme == "zero":
        return ParamVector(MODEL, np.zeros(n, dtype=dtype), spec)
    if scheme != "glorot":
        raise InputError(f"unknown init scheme {scheme!r}")
    gen = rng.stream(seed)
    out = np.zeros(n, dtype=np.float64)
    pos = 0
    for layer in spec.layers:
        if isinstance(layer, Dense):
            fan_in, fan_out = layer.in_dim, layer.out_dim
            wn = fan_in * fan_out
        elif isinstance(layer, Conv):
            fan_in = layer.in_channels * layer.kernel_h * layer.kernel_w
            fan_out = layer.out_channels * layer.kernel_h * layer.kernel_w
            wn = layer.out_channels * fan_in
        else:
            continue
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        out[pos:pos + wn] = gen.uniform(-limit, limit, size=wn)
        pos += wn
        pos += layer.out_dim if isinstance(layer, Dense) else layer.out_channels
    return ParamVector(MODEL, out.astype(dtype), spec)


# ---------------------------------------------------------------------------
# Forward / backward core
# ---------------------------------------------------------------------------

def split_params(spec: ModelSpec, values: np.ndarray) -> list:
    """Views of the flat vector as per-layer (weights, bias) pairs.

    Non-parametric layers get None.  The views share memory with `values`.
    """
    out = []
    pos = 0
    for layer in spec.layers:
        if isinstance(layer, Dense):
            wn = layer.in_dim * layer.out_dim
            w = values[pos:pos + wn].reshape(layer.in_dim, layer.out_dim)
            b = values[pos + wn:pos + wn + layer.out_dim]
            pos += wn + layer.out_dim
            out.append((w, b))
        elif isinstance(layer, Conv):
            wn = layer.out_channels * layer.in_channels * layer.kernel_h * layer.kernel_w
            w = values[pos:pos + wn].reshape(
                layer.out_channels, layer.in_channels, layer.kernel_h, layer.kernel_w)
            b = values[pos + wn:pos + wn + layer.out_channels]
            pos += wn + layer.out_channels
            out.append((w, b))
        else:
            out.append(None)
    return out


def prepare_inputs(spec: ModelSpec, inputs: np.ndarray, dtype) -> np.ndarray:
    """Reshape raw sample arrays to what the first layer expects."""
    x = np.asarray(inputs)
    n = x.shape[0]
    flat = int(np.prod(x.shape[1:]))
    expected = int(np.prod(spec.input_shape))
    if flat != expected:
        raise LayoutError(
            f"samples have {flat} values, model expects {expected}")
    if isinstance(spec.layers[0], Dense):
        x = x.reshape(n, flat)
    else:
        x = x.reshape(n, *spec.input_shape)
    return x.astype(dtype, copy=False)


def _conv_forward(x, w, b):
    # x: (n,c,h,w), w: (o,c,kh,kw) -> (n,o,h',w')
    kh, kw = w.shape[2], w.shape[3]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    z = np.einsum("nchwij,ocij->nohw", windows, w)
    z += b[None, :, None, None]
    return z


def _conv_backward(x, w, dz):
    kh, kw = w.shape[2], w.shape[3]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    gw = np.einsum("nchwij,nohw->ocij", windows, dz)
    gb = dz.sum(axis=(0, 2, 3))
    # Full correlation of dz with the kernel rotated 180 degrees gives dx.
    pad = np.pad(dz, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    pwin = np.lib.stride_tricks.sliding_window_view(pad, (kh, kw), axis=(2, 3))
    wflip = w[:, :, ::-1, ::-1]
    dx = np.einsum("nohwij,ocij->nchw", pwin, wflip)
    return dx, gw, gb


def _pool_forward(x, window):
    n, c, h, w = x.shape
    p = window
    blocks = x.reshape(n, c, h // p, p, w // p, p)
    flat = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // p, w // p, p * p)
    # argmax picks the first maximum in row-major window order
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dz, idx, in_shape, window):
    n, c, h, w = in_shape
    p = window
    flat = np.zeros((n, c, h // p, w // p, p * p), dtype=dz.dtype)
    np.put_along_axis(flat, idx[..., None], dz[..., None], axis=-1)
    blocks = flat.reshape(n, c, h // p, w // p, p, p).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(n, c, h, w)


def forward_core(spec: ModelSpec, layer_params: list, x: np.ndarray,
                 want_cache: bool = False):
    """Run the layer stack; return (logits, caches)."""
    caches = [] if want_cache else None
    for layer, params in zip(spec.layers, layer_params):
        if isinstance(layer, Dense):
            if x.ndim > 2:
                x = x.reshape(x.shape[0], -1)
            w, b = params
            if want_cache:
                caches.append(x)
            x = x @ w + b
        elif isinstance(layer, Conv):
            w, b = params
            if want_cache:
                caches.append(x)
            x = _conv_forward(x, w, b)
        elif isinstance(layer, MaxPool):
            out, idx = _pool_forward(x, layer.window)
            if want_cache:
                caches.append((x.shape, idx))
            x = out
        elif isinstance(layer, Relu):
            if want_cache:
                caches.append(x)
            x = np.maximum(x, 0)
    return x, caches


def backward_core(spec: ModelSpec, layer_params: list, caches: list,
                  dlogits: np.ndarray) -> list:
    """Gradients per layer, walking the stack in reverse.

    Returns a list parallel to spec.layers with (gw, gb) or None entries.
    """
    grads: list = [None] * len(spec.layers)
    dx = dlogits
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        if isinstance(layer, Dense):
            xin = caches[i]
            w, _ = layer_params[i]
            gw = xin.T @ dx
            gb = dx.sum(axis=0)
            dx = dx @ w.T
            grads[i] = (gw, gb)
            # undo the input flatten if the upstream feature map was 3-d
            if i > 0 and not isinstance(spec.layers[i - 1], Dense):
                upstream = _upstream_shape(spec, i, xin.shape[0])
                dx = dx.reshape(upstream)
        elif isinstance(layer, Conv):
            xin = caches[i]
            w, _ = layer_params[i]
            dx, gw, gb = _conv_backward(xin, w, dx)
            grads[i] = (gw, gb)
        elif isinstance(layer, MaxPool):
            in_shape, idx = caches[i]
            dx = _pool_backward(dx, idx, in_shape, layer.window)
        elif isinstance(layer, Relu):
            xin = caches[i]
            dx = dx * (xin > 0)
    return grads


def _upstream_shape(spec: ModelSpec, layer_index: int, n: int):
    shape = spec.input_shape
    for layer in spec.layers[:layer_index]:
        if isinstance(layer, Dense):
            shape = (layer.out_dim,)
        elif isinstance(layer, Conv):
            shape = (layer.out_channels, shape[1] - layer.kernel_h + 1,
                     shape[2] - layer.kernel_w + 1)
        elif isinstance(layer, MaxPool):
            shape = (shape[0], shape[1] // layer.window, shape[2] // layer.window)
    return (n,) + shape


def flatten_grads(spec: ModelSpec, grads: list, dtype) -> np.ndarray:
    out = np.empty(spec.param_count(), dtype=dtype)
    pos = 0
    for g in grads:
        if g is None:
            continue
        gw, gb = g
        out[pos:pos + gw.size] = gw.reshape(-1)
        pos += gw.size
        out[pos:pos + gb.size] = gb
        pos += gb.size
    return out


def _softmax_ce(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy after softmax, and the logits gradient."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = exp / total
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    return float(loss), dlogits


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def forward(spec: ModelSpec, params: ParamVector, batch: Batch) -> np.ndarray:
    """Logits matrix (batch x num_classes); pure, no mutation."""
    if params.kind != MODEL:
        raise LayoutError("forward expects a model vector")
    if not (params.spec is spec or params.spec == spec):
        raise LayoutError("parameter layout does not match the given spec")
    x = prepare_inputs(spec, batch.inputs, params.dtype)
    logits, _ = forward_core(spec, split_params(spec, params.values), x)
    return logits


def _check_labels(labels: np.ndarray, num_classes: int):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InputError(
            f"labels outside [0, {num_classes}): {labels.min()}..{labels.max()}")
    return labels.astype(np.int64, copy=False)


def loss_and_grad(spec: ModelSpec, params: ParamVector, batch: Batch) -> GradResult:
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    if params.kind != MODEL:
        raise LayoutError("loss_and_grad expects a model vector")
    labels = _check_labels(batch.labels, spec.num_classes)
    x = prepare_inputs(spec, batch.inputs, params.dtype)
    layer_params = split_params(spec, params.values)
    logits, caches = forward_core(spec, layer_params, x, want_cache=True)
    loss, dlogits = _softmax_ce(logits, labels)
    grads = backward_core(spec, layer_params, caches, dlogits)
    flat = flatten_grads(spec, grads, params.dtype)
    return GradResult(loss, ParamVector(UPDATE, flat, spec))


def sgd_step(params: ParamVector, grad: ParamVector, eta: float) -> ParamVector:
    """Coordinate-wise params - eta * grad."""
    if params.kind != MODEL:
        raise LayoutError("sgd_step expects a model vector")
    check_same_layout(params, grad)
    dtype = params.dtype
    g = grad.values.astype(dtype, copy=False)
    return ParamVector(MODEL, params.values - dtype.type(eta) * g, params.spec)


def run_sgd(spec: ModelSpec, values: np.ndarray, batches: Iterable[Batch],
            eta: float) -> np.ndarray:
    """Apply one SGD step per batch, in order; returns the new flat vector.

    Produces bit-identical results to chaining loss_and_grad + sgd_step,
    while reusing one working buffer for speed.
    """
    work = values.copy()
    dtype = work.dtype
    layer_params = split_params(spec, work)
    eta = dtype.type(eta)
    for batch in batches:
        labels = _check_labels(batch.labels, spec.num_classes)
        x = prepare_inputs(spec, batch.inputs, dtype)
        logits, caches = forward_core(spec, layer_params, x, want_cache=True)
        _, dlogits = _softmax_ce(logits, labels)
        grads = backward_core(spec, layer_params, caches, dlogits)
        for params, g in zip(layer_params, grads):
            if g is None:
                continue
            w, b = params
            gw, gb = g
            gw *= eta
            gb *= eta
            w -= gw
            b -= gb
    return work


def finite_diff_grad(spec: ModelSpec, params: ParamVector, batch: Batch,
                     epsilon: float = 1e-5) -> ParamVector:
    """Central-difference gradient oracle, always computed in float64."""
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    base = params.values.astype(np.float64)
    labels = _check_labels(batch.labels, spec.num_classes)
    x = prepare_inputs(spec, batch.inputs, np.float64)

    def loss_at(vec):
        logits, _ = forward_core(spec, split_params(spec, vec), x)
        loss, _ = _softmax_ce(logits, labels)
        return loss

    out = np.empty_like(base)
    probe = base.copy()
    for i in range(base.shape[0]):
        orig = probe[i]
        probe[i] = orig + epsilon
        up = loss_at(probe)
        probe[i] = orig - epsilon
        down = loss_at(probe)
        probe[i] = orig
        out[i] = (up - down) / (2.0 * epsilon)
    return ParamVector(UPDATE, out, spec)
