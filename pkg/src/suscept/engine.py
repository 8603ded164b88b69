"""Inference engine: forward passes with hidden-state taps, depth evolution,
and reverse-mode input gradients.

Depth plays the role of time: evolve() advances a hidden state from tap l to
tap l + delta_l by applying exactly the layer segments in between, so
evolve(b, evolve(a, z, l), l + a) and evolve(a + b, z, l) run the same code
path and agree bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import layer_backward, layer_forward
from .model import ModelSpec
from .tensor import as_tensor


@dataclass
class Trajectory:
    """Recorded hidden states (depth, state) from the input (0) to the output (L)."""

    states: list

    def state(self, depth: int) -> np.ndarray:
        for d, z in self.states:
            if d == depth:
                return z
        raise KeyError(f"no state recorded at depth {depth}")

    @property
    def depths(self):
        return [d for d, _ in self.states]


def _check_input(model: ModelSpec, x: np.ndarray, shape) -> np.ndarray:
    x = as_tensor(x)
    if x.shape != tuple(shape):
        raise ValueError(f"input shape {x.shape} does not match {tuple(shape)}")
    return x


def _run_layers(model, params, xb, first, last, train_mode=False, keep_caches=False):
    caches = [] if keep_caches else None
    for i in range(first, last):
        xb, cache = layer_forward(model.layers[i], params.get(i, {}), xb, train_mode)
        if keep_caches:
            caches.append(cache)
    return xb, caches


def forward(model: ModelSpec, params: dict, x, record: bool = False):
    """Run one input through the model.

    Returns the class-score output, or (output, Trajectory) when record is
    set. Batch norm always uses running statistics here, so one input's
    result never depends on what else is in flight.
    """
    x = _check_input(model, x, model.input_shape)
    xb = x[None]
    states = [(0, x)] if record else None
    for depth, (first, last) in enumerate(model.segments, start=1):
        xb, _ = _run_layers(model, params, xb, first, last)
        if record:
            states.append((depth, xb[0].copy()))
    y = xb[0]
    if record:
        states[-1] = (model.depth_L, y)
        return y, Trajectory(states)
    return y


def forward_batch(model: ModelSpec, params: dict, xs) -> np.ndarray:
    """Inference on a stacked batch (no taps recorded)."""
    xs = as_tensor(xs)
    if xs.shape[1:] != model.input_shape:
        raise ValueError(
            f"batch input shape {xs.shape[1:]} does not match {model.input_shape}"
        )
    y, _ = _run_layers(model, params, xs, 0, len(model.layers))
    return y


def evolve(model: ModelSpec, params: dict, delta_l: int, z, l: int) -> np.ndarray:
    """Advance a depth-l hidden state by delta_l tap intervals."""
    if not (0 <= l <= model.depth_L and 0 <= l + delta_l <= model.depth_L):
        raise ValueError(
            f"depth out of range: l={l}, delta_l={delta_l}, L={model.depth_L}"
        )
    if delta_l < 0:
        raise ValueError("evolution cannot run backwards in depth")
    z = _check_input(model, z, model.tap_shapes[l])
    if delta_l == 0:
        return z
    zb = z[None]
    for depth in range(l, l + delta_l):
        first, last = model.segments[depth]
        zb, _ = _run_layers(model, params, zb, first, last)
    return zb[0]


def input_gradient(model: ModelSpec, params: dict, x, objective) -> np.ndarray:
    """Gradient of a scalar reduction of the output with respect to the input.

    `objective` maps the output array to (value, gradient-w.r.t.-output);
    reverse-mode accumulation walks the layer caches backwards. ReLU uses
    subgradient 0 at 0.
    """
    x = _check_input(model, x, model.input_shape)
    y, caches = _run_layers(model, params, x[None], 0, len(model.layers),
                            keep_caches=True)
    _, dy = objective(y[0])
    dyb = as_tensor(dy)[None]
    for i in range(len(model.layers) - 1, -1, -1):
        dyb, _ = layer_backward(model.layers[i], params.get(i, {}), dyb, caches[i])
    return dyb[0]


def forward_batch_with_caches(model: ModelSpec, params: dict, xs):
    """Batched forward keeping layer caches; used by the attack inner loop."""
    y, caches = _run_layers(model, params, as_tensor(xs), 0, len(model.layers),
                            keep_caches=True)
    return y, caches


def backward_batch_input(model: ModelSpec, params: dict, dy, caches) -> np.ndarray:
    """Input gradients for a batch given caches from forward_batch_with_caches."""
    for i in range(len(model.layers) - 1, -1, -1):
        dy, _ = layer_backward(model.layers[i], params.get(i, {}), dy, caches[i])
    return dy
