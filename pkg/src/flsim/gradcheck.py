"""Finite-difference validation of the analytic gradients.

Random tiny models keep the coordinate loop cheap while still exercising
every layer type.  The reported figure for one instance is

    max_i |analytic_i - fd_i| / max(||analytic||_inf, ||fd||_inf)

i.e. the worst coordinate discrepancy relative to the largest gradient
magnitude, which stays meaningful on coordinates where the gradient
itself is near zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (Batch, ModelSpec, cnn_spec, finite_diff_grad, init_params,
                 loss_and_grad, mlp_spec)
from . import rng

DOUBLE_GATE = 1e-6
SINGLE_GATE = 1e-4


def relative_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(fd).max(), 1e-300)
    return float(np.abs(analytic - fd).max() / scale)


def random_tiny_spec(kind: str, gen: np.random.Generator) -> ModelSpec:
    if kind == "mlp":
        in_dim = int(gen.integers(3, 9))
        hidden = int(gen.integers(3, 7))
        classes = int(gen.integers(2, 5))
        return mlp_spec((1, 1, in_dim), hidden=(hidden,), num_classes=classes)
    side = int(gen.integers(6, 9))
    classes = int(gen.integers(2, 5))
    return cnn_spec_tiny(side, classes, gen)


def cnn_spec_tiny(side: int, classes: int, gen: np.random.Generator) -> ModelSpec:
    from .nn import Conv, Dense, MaxPool, Relu
    channels = int(gen.integers(1, 3))
    kernel = 3
    conv_out = int(gen.integers(2, 4))
    after = side - kernel + 1
    pool = 2 if after % 2 == 0 else 1
    pooled = after // pool
    layers = [Conv(channels, conv_out, kernel, kernel)]
    if pool > 1:
        layers.append(MaxPool(pool))
    layers += [Relu(), Dense(conv_out * pooled * pooled, classes)]
    return ModelSpec("cnn", tuple(layers), (channels, side, side), classes)


def random_instance(kind: str, seed: int, dtype=np.float64):
    """One (spec, params, batch) triple with moderate-scale values."""
    gen = rng.stream(seed, "gradcheck", kind)
    spec = random_tiny_spec(kind, gen)
    params = init_params(spec, rng.derive_key(seed, "gradcheck", kind, "params"),
                         "glorot", dtype=dtype)
    # jitter biases too, so their gradients are exercised off the origin
    jitter = gen.normal(0.0, 0.1, size=params.values.shape)
    params = type(params)(params.kind, (params.values + jitter).astype(dtype),
                          spec)
    n = int(gen.integers(2, 5))
    inputs = gen.random((n, *spec.input_shape))
    labels = gen.integers(0, spec.num_classes, size=n)
    return spec, params, Batch(inputs.astype(dtype), labels.astype(np.int64))


@dataclass(frozen=True)
class GradCheckReport:
    trials: int
    max_error: float
    gate: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.gate


def run_gradcheck(model: str = "both", precision: str = "double",
                  trials: int = 100, seed: int = 7,
                  epsilon: float = 1e-5) -> GradCheckReport:
    """Compare analytic and central-difference gradients on random instances."""
    kinds = ("mlp", "cnn") if model == "both" else (model,)
    dtype = np.float64 if precision == "double" else np.float32
    gate = DOUBLE_GATE if precision == "double" else SINGLE_GATE
    worst = 0.0
    per_kind = [trials // len(kinds) + (1 if i < trials % len(kinds) else 0)
                for i in range(len(kinds))]
    for kind, count in zip(kinds, per_kind):
        for i in range(count):
            spec, params, batch = random_instance(kind, rng.derive_key(seed, kind, i),
                                                  dtype=dtype)
            analytic = loss_and_grad(spec, params, batch).grad.values
            fd = finite_diff_grad(spec, params, batch, epsilon).values
            worst = max(worst, relative_error(analytic.astype(np.float64), fd))
    return GradCheckReport(trials, worst, gate)
