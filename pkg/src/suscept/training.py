"""Desk-scale trainer: Adam on cross-entropy, batch-norm running stats updated
in train mode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import layer_backward, layer_forward
from .model import ModelSpec, copy_params, validate_params
from .tensor import as_tensor


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    probs = softmax(logits)
    n = logits.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def _train_step(model, params, xb, labels, adam_state, cfg, step):
    """One forward/backward/update on a batch; returns the batch loss."""
    caches = []
    h = xb
    for i, layer in enumerate(model.layers):
        h, cache = layer_forward(layer, params.get(i, {}), h, train_mode=True)
        caches.append(cache)
    loss, dy = cross_entropy(h, labels)
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"loss is {loss} at step {step}")

    grads = {}
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        dy, g = layer_backward(layer, params.get(i, {}), dy, caches[i],
                               need_param_grads=True)
        if g is not None:
            grads[i] = g
        # commit the running statistics computed during the forward pass
        if layer.kind == "batchnorm":
            new_running = caches[i][4]
            params[i]["running_mean"] = new_running[0]
            params[i]["running_var"] = new_running[1]

    b1, b2 = cfg.beta1, cfg.beta2
    bias1 = 1.0 - b1 ** step
    bias2 = 1.0 - b2 ** step
    for i, layer_grads in grads.items():
        for name, g in layer_grads.items():
            if g is None:
                continue
            m, v = adam_state.setdefault((i, name), (np.zeros_like(g), np.zeros_like(g)))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            adam_state[(i, name)] = (m, v)
            update = (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)
            params[i][name] = params[i][name] - cfg.learning_rate * update
    return loss


def train(model: ModelSpec, params: dict, dataset, config: TrainConfig):
    """Train a copy of the parameters; returns (new params, per-epoch mean loss).

    dataset is a sequence of (input tensor, integer label) pairs.
    """
    pairs = list(dataset)
    if not pairs:
        raise ValueError("dataset is empty")
    validate_params(model, params)
    xs = np.stack([as_tensor(x) for x, _ in pairs])
    labels = np.asarray([int(c) for _, c in pairs], dtype=np.int64)
    if xs.shape[1:] != model.input_shape:
        raise ValueError(
            f"dataset inputs have shape {xs.shape[1:]}, model wants {model.input_shape}"
        )

    params = copy_params(params)
    adam_state = {}
    rng = np.random.default_rng(config.shuffle_seed)
    history = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(pairs), config.batch_size):
            idx = order[start : start + config.batch_size]
            step += 1
            losses.append(
                _train_step(model, params, xs[idx], labels[idx], adam_state, config, step)
            )
        history.append(float(np.mean(losses)))
    return params, history


def accuracy(model: ModelSpec, params: dict, dataset, batch_size=64) -> float:
    from .engine import forward_batch

    pairs = list(dataset)
    if not pairs:
        raise ValueError("dataset is empty")
    correct = 0
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        xs = np.stack([as_tensor(x) for x, _ in chunk])
        preds = forward_batch(model, params, xs).argmax(axis=1)
        correct += int(np.sum(preds == np.asarray([c for _, c in chunk])))
    return correct / len(pairs)
