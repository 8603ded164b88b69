"""Layer vocabulary: specs, shape chaining, parameters, forward/backward.

Layers are pure functions of (spec, params, input); state lives in the params
dict owned by the caller. Batch norm follows the usual convention pair:
inference mode normalizes with running statistics, train mode with batch
statistics (and reports updated running stats through the cache).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

KINDS = ("conv", "conv1x1", "dense", "batchnorm", "relu", "maxpool", "chanavg")


class ModelBuildError(ValueError):
    """A layer chain fails shape validation; the message names the layer."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    out_features: int = 0
    channels: int = 0
    tap_after: bool = False

    def describe(self) -> str:
        if self.kind in ("conv", "conv1x1"):
            return (
                f"{self.kind}({self.in_ch}->{self.out_ch}, k={self.kernel}, "
                f"s={self.stride}, p={self.padding})"
            )
        if self.kind == "dense":
            return f"dense({self.in_features}->{self.out_features})"
        if self.kind == "batchnorm":
            return f"batchnorm({self.channels})"
        if self.kind == "maxpool":
            return f"maxpool(k={self.kernel}, s={self.stride})"
        return self.kind


def conv2d(in_ch, out_ch, kernel, stride=1, padding=0, tap_after=False) -> LayerSpec:
    return LayerSpec("conv", in_ch=in_ch, out_ch=out_ch, kernel=kernel,
                     stride=stride, padding=padding, tap_after=tap_after)


def conv1x1(in_ch, out_ch, tap_after=False) -> LayerSpec:
    return LayerSpec("conv1x1", in_ch=in_ch, out_ch=out_ch, kernel=1,
                     stride=1, padding=0, tap_after=tap_after)


def dense(in_features, out_features, tap_after=False) -> LayerSpec:
    return LayerSpec("dense", in_features=in_features, out_features=out_features,
                     tap_after=tap_after)


def batchnorm(channels, tap_after=False) -> LayerSpec:
    return LayerSpec("batchnorm", channels=channels, tap_after=tap_after)


def relu(tap_after=False) -> LayerSpec:
    return LayerSpec("relu", tap_after=tap_after)


def maxpool(kernel, stride, tap_after=False) -> LayerSpec:
    return LayerSpec("maxpool", kernel=kernel, stride=stride, tap_after=tap_after)


def chanavg(tap_after=False) -> LayerSpec:
    return LayerSpec("chanavg", tap_after=tap_after)


def output_shape(layer: LayerSpec, in_shape: tuple) -> tuple:
    """Shape of one (unbatched) sample after the layer; raises ModelBuildError."""
    k = layer.kind
    if k in ("conv", "conv1x1", "maxpool", "batchnorm", "chanavg"):
        if len(in_shape) != 3:
            raise ModelBuildError(
                f"{layer.describe()} needs a (channels, h, w) input, got {in_shape}"
            )
    if k in ("conv", "conv1x1"):
        c, h, w = in_shape
        if c != layer.in_ch:
            raise ModelBuildError(
                f"{layer.describe()} expects {layer.in_ch} input channels, got {c}"
            )
        oh = (h + 2 * layer.padding - layer.kernel) // layer.stride + 1
        ow = (w + 2 * layer.padding - layer.kernel) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ModelBuildError(
                f"{layer.describe()} exhausts the spatial dims: input {h}x{w} "
                f"yields {oh}x{ow}"
            )
        return (layer.out_ch, oh, ow)
    if k == "maxpool":
        c, h, w = in_shape
        oh = (h - layer.kernel) // layer.stride + 1
        ow = (w - layer.kernel) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ModelBuildError(
                f"{layer.describe()} exhausts the spatial dims: input {h}x{w} "
                f"yields {oh}x{ow}"
            )
        return (c, oh, ow)
    if k == "batchnorm":
        if in_shape[0] != layer.channels:
            raise ModelBuildError(
                f"{layer.describe()} expects {layer.channels} channels, got {in_shape[0]}"
            )
        return in_shape
    if k == "chanavg":
        return (in_shape[0],)
    if k == "dense":
        if len(in_shape) != 1 or in_shape[0] != layer.in_features:
            raise ModelBuildError(
                f"{layer.describe()} expects a flat input of {layer.in_features}, "
                f"got {in_shape}"
            )
        return (layer.out_features,)
    if k == "relu":
        return in_shape
    raise ModelBuildError(f"unknown layer kind {k!r}")


def param_shapes(layer: LayerSpec) -> dict:
    if layer.kind in ("conv", "conv1x1"):
        return {
            "w": (layer.out_ch, layer.in_ch, layer.kernel, layer.kernel),
            "b": (layer.out_ch,),
        }
    if layer.kind == "dense":
        return {"w": (layer.in_features, layer.out_features), "b": (layer.out_features,)}
    if layer.kind == "batchnorm":
        c = (layer.channels,)
        return {"gamma": c, "beta": c, "running_mean": c, "running_var": c}
    return {}


def layer_forward(layer: LayerSpec, p: dict, x: np.ndarray, train_mode=False):
    """Batched forward for one layer; returns (y, cache for backward)."""
    k = layer.kind
    if k in ("conv", "conv1x1"):
        y = kernels.conv2d_forward(x, p["w"], p["b"], layer.stride, layer.padding)
        return y, ("conv", x)
    if k == "dense":
        return x @ p["w"] + p["b"], ("dense", x)
    if k == "relu":
        mask = x > 0
        return x * mask, ("relu", mask)
    if k == "maxpool":
        y, idx = kernels.maxpool_forward(x, layer.kernel, layer.stride)
        return y, ("maxpool", idx, x.shape)
    if k == "chanavg":
        return x.mean(axis=(2, 3)), ("chanavg", x.shape)
    if k == "batchnorm":
        if train_mode:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            n = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * (n / max(n - 1, 1))
            new_running = (
                (1 - BN_MOMENTUM) * p["running_mean"] + BN_MOMENTUM * mean,
                (1 - BN_MOMENTUM) * p["running_var"] + BN_MOMENTUM * unbiased,
            )
        else:
            mean, var = p["running_mean"], p["running_var"]
            new_running = None
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        y = p["gamma"][None, :, None, None] * xhat + p["beta"][None, :, None, None]
        return y, ("batchnorm", xhat, inv_std, train_mode, new_running)
    raise ValueError(f"unknown layer kind {k!r}")


def layer_backward(layer: LayerSpec, p: dict, dy: np.ndarray, cache,
                   need_param_grads=False):
    """Backward pass; returns (dx, param grads dict or None)."""
    k = layer.kind
    if k in ("conv", "conv1x1"):
        _, x = cache
        dx, dw, db = kernels.conv2d_backward(
            x, p["w"], dy, layer.stride, layer.padding, need_param_grads
        )
        grads = {"w": dw, "b": db} if need_param_grads else None
        return dx, grads
    if k == "dense":
        _, x = cache
        dx = dy @ p["w"].T
        grads = {"w": x.T @ dy, "b": dy.sum(axis=0)} if need_param_grads else None
        return dx, grads
    if k == "relu":
        _, mask = cache
        return dy * mask, None
    if k == "maxpool":
        _, idx, x_shape = cache
        return kernels.maxpool_backward(dy, idx, x_shape, layer.kernel, layer.stride), None
    if k == "chanavg":
        _, x_shape = cache
        n, c, h, w = x_shape
        return np.broadcast_to(dy[:, :, None, None] / (h * w), x_shape).copy(), None
    if k == "batchnorm":
        _, xhat, inv_std, train_mode, _ = cache
        gamma = p["gamma"][None, :, None, None]
        if need_param_grads:
            grads = {
                "gamma": (dy * xhat).sum(axis=(0, 2, 3)),
                "beta": dy.sum(axis=(0, 2, 3)),
                "running_mean": None,
                "running_var": None,
            }
        else:
            grads = None
        if not train_mode:
            dx = dy * gamma * inv_std[None, :, None, None]
            return dx, grads
        # train mode: differentiate through the batch statistics
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        dxhat = dy * gamma
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        dx = (inv_std[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
        return dx, grads
    raise ValueError(f"unknown layer kind {k!r}")
