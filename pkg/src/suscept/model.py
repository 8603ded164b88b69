"""Model specs, the custom C/D architecture, parameter init, checkpoints.

A model is a validated chain of layers plus its tap points. Taps split the
chain into depth segments: tap 0 is the input, tap L the output, and the
recorded hidden states at equal depth always share a shape, which is what
makes drift distances between two inference passes well-defined.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .layers import (
    LayerSpec,
    ModelBuildError,
    batchnorm,
    chanavg,
    conv1x1,
    conv2d,
    dense,
    maxpool,
    output_shape,
    param_shapes,
    relu,
)
from .tensor import derive_seed, gaussian_tensor, read_tensor, write_tensor

CHECKPOINT_VERSION = 1

# Downsampling intake mirroring the ResNet stem: a large-kernel strided
# convolution followed by a maxpool. No padding, so undersized inputs fail
# shape validation inside the intake rather than deeper in the chain.
INTAKE_KERNEL = 7
INTAKE_STRIDE = 2
INTAKE_POOL = 2
BODY_KERNEL = 3


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    input_shape: tuple
    num_classes: int
    depth_L: int
    tap_shapes: tuple       # shape at every tap depth 0..L, input first
    segments: tuple         # per tap interval, (first layer idx, last layer idx + 1)
    meta: tuple = ()        # ("custom", C, D) for checkpointable models

    @property
    def output_shape(self):
        return self.tap_shapes[-1]


def build_model(layers, input_shape, num_classes, meta=()) -> ModelSpec:
    """Validate the layer chain and locate tap points."""
    layers = tuple(layers)
    if not layers:
        raise ModelBuildError("a model needs at least one layer")
    input_shape = tuple(int(s) for s in input_shape)

    shape = input_shape
    tap_shapes = [input_shape]
    segments = []
    seg_start = 0
    for i, layer in enumerate(layers):
        try:
            shape = output_shape(layer, shape)
        except ModelBuildError as e:
            raise ModelBuildError(f"layer {i}: {e}") from None
        is_last = i == len(layers) - 1
        if layer.tap_after and not is_last:
            tap_shapes.append(shape)
            segments.append((seg_start, i + 1))
            seg_start = i + 1
    # the output is always the final tap
    tap_shapes.append(shape)
    segments.append((seg_start, len(layers)))

    if shape != (int(num_classes),):
        raise ModelBuildError(
            f"final layer produces {shape}, expected ({num_classes},) class scores"
        )
    return ModelSpec(
        layers=layers,
        input_shape=input_shape,
        num_classes=int(num_classes),
        depth_L=len(segments),
        tap_shapes=tuple(tap_shapes),
        segments=tuple(segments),
        meta=tuple(meta),
    )


def build_custom(C: int, D: int, num_classes: int, input_shape) -> ModelSpec:
    """The channel/depth-controlled CNN family.

    D tuples of conv + batchnorm + ReLU; the first tuple downsamples (strided
    intake conv from the input channels, maxpool after the ReLU), the rest are
    shape-preserving C->C convolutions. A 1x1 convolution, channel-wise spatial
    averaging and a final dense layer produce the class scores. Hidden states
    are tapped after every tuple, plus the input and the output: L = D + 1.
    """
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    if D < 2:
        raise ValueError(f"D must be >= 2, got {D}")
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    input_shape = tuple(int(s) for s in input_shape)
    if len(input_shape) != 3:
        raise ValueError(f"input_shape must be (channels, h, w), got {input_shape}")

    layers = [
        conv2d(input_shape[0], C, INTAKE_KERNEL, stride=INTAKE_STRIDE, padding=0),
        batchnorm(C),
        relu(),
        maxpool(INTAKE_POOL, INTAKE_POOL, tap_after=True),
    ]
    for _ in range(D - 1):
        layers += [
            conv2d(C, C, BODY_KERNEL, stride=1, padding=BODY_KERNEL // 2),
            batchnorm(C),
            relu(tap_after=True),
        ]
    layers += [conv1x1(C, C), chanavg(), dense(C, num_classes)]
    return build_model(layers, input_shape, num_classes, meta=("custom", C, D))


# --- parameters -------------------------------------------------------------


def init_gaussian(model: ModelSpec, seed, unit_variance=False) -> dict:
    """I.i.d. Gaussian weights, zero biases, identity batch norm.

    Default weight scale is He-style (var 2/fan_in), which keeps deep stacks
    trainable; unit_variance=True switches to N(0, 1) entries to match the
    random-matrix growth setting.
    """
    params = {}
    for i, layer in enumerate(model.layers):
        shapes = param_shapes(layer)
        if not shapes:
            continue
        p = {}
        if layer.kind in ("conv", "conv1x1", "dense"):
            wshape = shapes["w"]
            if layer.kind == "dense":
                fan_in = wshape[0]
            else:
                fan_in = wshape[1] * wshape[2] * wshape[3]
            sigma = 1.0 if unit_variance else np.sqrt(2.0 / fan_in)
            p["w"] = gaussian_tensor(wshape, derive_seed(seed, i)) * sigma
            p["b"] = np.zeros(shapes["b"])
        else:  # batchnorm
            c = shapes["gamma"]
            p = {
                "gamma": np.ones(c),
                "beta": np.zeros(c),
                "running_mean": np.zeros(c),
                "running_var": np.ones(c),
            }
        params[i] = p
    return params


def zero_params(model: ModelSpec) -> dict:
    params = {}
    for i, layer in enumerate(model.layers):
        shapes = param_shapes(layer)
        if not shapes:
            continue
        if layer.kind == "batchnorm":
            c = shapes["gamma"]
            params[i] = {
                "gamma": np.ones(c),
                "beta": np.zeros(c),
                "running_mean": np.zeros(c),
                "running_var": np.ones(c),
            }
        else:
            params[i] = {name: np.zeros(s) for name, s in shapes.items()}
    return params


def copy_params(params: dict) -> dict:
    return {i: {k: v.copy() for k, v in p.items()} for i, p in params.items()}


def validate_params(model: ModelSpec, params: dict) -> None:
    for i, layer in enumerate(model.layers):
        shapes = param_shapes(layer)
        if not shapes:
            continue
        if i not in params:
            raise ValueError(f"missing parameters for layer {i} ({layer.describe()})")
        for name, shape in shapes.items():
            got = params[i][name].shape
            if got != shape:
                raise ValueError(
                    f"layer {i} ({layer.describe()}): parameter {name} has shape "
                    f"{got}, expected {shape}"
                )


PARAM_ORDER = {
    "conv": ("w", "b"),
    "conv1x1": ("w", "b"),
    "dense": ("w", "b"),
    "batchnorm": ("gamma", "beta", "running_mean", "running_var"),
}

# --- checkpoints ------------------------------------------------------------
# A checkpoint is a text manifest terminated by an "end-manifest" line,
# followed by the parameter tensors in the binary tensor format, in layer
# order.

_MANIFEST_END = b"end-manifest\n"


def save_checkpoint(path, model: ModelSpec, params: dict) -> None:
    if not model.meta or model.meta[0] != "custom":
        raise ValueError("only custom-architecture models are checkpointable")
    validate_params(model, params)
    _, c, d = model.meta
    manifest = (
        f"format-version = {CHECKPOINT_VERSION}\n"
        f"architecture = custom\n"
        f"channels = {c}\n"
        f"depth = {d}\n"
        f"classes = {model.num_classes}\n"
        f"input-shape = {'x'.join(str(s) for s in model.input_shape)}\n"
    )
    with open(path, "wb") as fh:
        fh.write(manifest.encode())
        fh.write(_MANIFEST_END)
        for i, layer in enumerate(model.layers):
            for name in PARAM_ORDER.get(layer.kind, ()):
                write_tensor(fh, params[i][name])


def load_checkpoint(path):
    """Returns (model, params) from a checkpoint file."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(_MANIFEST_END)
    if end < 0:
        raise ValueError(f"{path}: no manifest terminator found")
    fields = {}
    for line in data[:end].decode().splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    if fields.get("architecture") != "custom":
        raise ValueError(f"{path}: unsupported architecture {fields.get('architecture')!r}")
    if int(fields.get("format-version", -1)) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    input_shape = tuple(int(s) for s in fields["input-shape"].split("x"))
    model = build_custom(
        int(fields["channels"]), int(fields["depth"]), int(fields["classes"]), input_shape
    )
    params = {}
    fh = io.BytesIO(data[end + len(_MANIFEST_END):])
    for i, layer in enumerate(model.layers):
        names = PARAM_ORDER.get(layer.kind, ())
        if names:
            params[i] = {name: read_tensor(fh) for name in names}
    validate_params(model, params)
    return model, params
