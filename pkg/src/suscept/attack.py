"""Perturbations of fixed rms radius: gradient-ascent attacks and the random
baseline.

The attack maximizes the rms distance between the clean and perturbed outputs
with plain gradient ascent (raw gradient times step size, the literal
procedure), projecting back onto the radius-r hypersphere after every update
and returning the best iterate seen.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .engine import backward_batch_input, forward_batch, forward_batch_with_caches
from .model import ModelSpec
from .tensor import (
    as_tensor,
    gaussian_tensor,
    load_tensor,
    project_to_sphere,
    rms_norm,
    save_tensor,
)

INIT_MODES = ("random-sphere", "zero-grad")


@dataclass(frozen=True)
class AttackConfig:
    radius: float
    steps: int = 5
    step_size: float = 0.01
    init: str = "random-sphere"
    seed: int = 0
    normalize_steps: bool = False  # rescale each gradient step to unit rms

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")


@dataclass
class Perturbation:
    delta: np.ndarray
    objective: float     # achieved rms distance between clean and perturbed outputs
    init_used: str
    config: AttackConfig


def random_perturbation(x, r: float, seed) -> Perturbation:
    """Gaussian noise projected onto the radius-r hypersphere."""
    x = as_tensor(x)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(x.shape)
    while not noise.any():  # almost surely never; contract says re-draw
        noise = rng.standard_normal(x.shape)
    delta = project_to_sphere(noise, r)
    return Perturbation(delta, float("nan"), "random-sphere",
                        AttackConfig(radius=r, seed=int(seed)))


def pgd_attack(model: ModelSpec, params: dict, x, cfg: AttackConfig) -> Perturbation:
    """Adversarial perturbation for one input."""
    x = as_tensor(x)
    if x.shape != model.input_shape:
        raise ValueError(f"input shape {x.shape} does not match {model.input_shape}")
    return attack_batch(model, params, x[None], cfg, [cfg.seed])[0]


def attack_batch(model: ModelSpec, params: dict, xs, cfg: AttackConfig, seeds):
    """Run the attack on a stacked batch, one independent perturbation per row.

    Per-row seeds keep results identical however inputs are grouped into
    batches of the same composition; reduction order never enters.
    """
    xs = as_tensor(xs)
    n = xs.shape[0]
    if len(seeds) != n:
        raise ValueError("one seed per input is required")
    flat_dim = int(np.prod(xs.shape[1:]))
    axes = tuple(range(1, xs.ndim))

    y0 = forward_batch(model, params, xs)
    out_dim = int(np.prod(y0.shape[1:]))
    out_axes = tuple(range(1, y0.ndim))

    deltas = np.empty_like(xs)
    init_used = []
    for i, seed in enumerate(seeds):
        if cfg.init == "zero-grad":
            deltas[i] = 0.0
            init_used.append("zero-grad")
        else:
            deltas[i] = random_perturbation(xs[i], cfg.radius, seed).delta
            init_used.append("random-sphere")

    def batch_rms(v, axes_, dim_):
        return np.sqrt(np.sum(v * v, axis=axes_) / dim_)

    if cfg.init == "zero-grad":
        # The objective gradient at delta = 0 is the zero vector (the distance
        # has no direction there), so this probes it once and falls back to the
        # random sphere for rows where nothing comes back, as documented.
        y, caches = forward_batch_with_caches(model, params, xs + deltas)
        dy = _objective_output_grad(y, y0, out_axes, out_dim)
        grad = backward_batch_input(model, params, dy, caches)
        for i, seed in enumerate(seeds):
            if grad[i].any():
                deltas[i] = project_to_sphere(cfg.step_size * grad[i], cfg.radius)
            else:
                deltas[i] = random_perturbation(xs[i], cfg.radius, seed).delta
                init_used[i] = "random-sphere (zero-grad fallback)"

    best_obj = np.full(n, -np.inf)
    best_delta = deltas.copy()
    for step in range(cfg.steps + 1):
        last = step == cfg.steps
        if last:
            y = forward_batch(model, params, xs + deltas)
        else:
            y, caches = forward_batch_with_caches(model, params, xs + deltas)
        obj = batch_rms(y - y0, out_axes, out_dim)
        improved = obj > best_obj
        best_obj = np.where(improved, obj, best_obj)
        best_delta[improved] = deltas[improved]
        if last:
            break
        dy = _objective_output_grad(y, y0, out_axes, out_dim)
        grad = backward_batch_input(model, params, dy, caches)
        if cfg.normalize_steps:
            g_rms = batch_rms(grad, axes, flat_dim)
            scale = np.where(g_rms > 0, 1.0 / np.maximum(g_rms, 1e-300), 0.0)
            grad = grad * scale.reshape((-1,) + (1,) * (xs.ndim - 1))
        deltas = deltas + cfg.step_size * grad
        norms = batch_rms(deltas, axes, flat_dim)
        if np.any(norms == 0):
            # ascent from a sphere point cannot reach the origin unless the
            # gradient exactly cancelled it; re-randomize those rows
            for i in np.nonzero(norms == 0)[0]:
                deltas[i] = random_perturbation(xs[i], cfg.radius, seeds[i]).delta
                norms[i] = cfg.radius
        deltas = deltas * (cfg.radius / norms).reshape((-1,) + (1,) * (xs.ndim - 1))

    return [
        Perturbation(best_delta[i].copy(), float(best_obj[i]), init_used[i],
                     replace(cfg, seed=int(seeds[i])))
        for i in range(n)
    ]


def _objective_output_grad(y, y0, out_axes, out_dim):
    """Gradient of rms(y - y0) w.r.t. y; zero where the distance is zero."""
    u = y - y0
    f = np.sqrt(np.sum(u * u, axis=out_axes) / out_dim)
    denom = out_dim * f
    scale = np.where(f > 0, 1.0 / np.maximum(denom, 1e-300), 0.0)
    return u * scale.reshape((-1,) + (1,) * (y.ndim - 1))


def save_perturbation(path, pert: Perturbation) -> None:
    """Binary delta plus a JSON sidecar with the attack settings."""
    save_tensor(path, pert.delta)
    manifest = {
        "radius": pert.config.radius,
        "steps": pert.config.steps,
        "step_size": pert.config.step_size,
        "seed": pert.config.seed,
        "init": pert.config.init,
        "init_used": pert.init_used,
        "objective": pert.objective,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_perturbation(path) -> Perturbation:
    delta = load_tensor(path)
    with open(str(path) + ".json") as fh:
        m = json.load(fh)
    cfg = AttackConfig(radius=m["radius"], steps=m["steps"], step_size=m["step_size"],
                       init=m["init"], seed=m["seed"])
    return Perturbation(delta, m["objective"], m["init_used"], cfg)
